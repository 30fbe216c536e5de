#include "dcn/evaluator.hpp"

#include <map>
#include <stdexcept>

#include "dcn/errors.hpp"

namespace dcn {

std::string to_string(Centricity c) { return c == Centricity::kUser ? "user" : "item"; }

Centricity parse_centricity(std::string_view s) {
  if (s == "user") return Centricity::kUser;
  if (s == "item") return Centricity::kItem;
  throw InputError("centricity must be 'user' or 'item', got '" + std::string(s) + "'");
}

nlohmann::ordered_json MetricReport::to_json() const {
  nlohmann::ordered_json j;
  j["centricity"] = to_string(centricity);
  j["auc"] = auc;
  j["gauc"] = gauc;
  j["mrr"] = mrr;
  j["ndcg@" + std::to_string(k)] = ndcg;
  j["k_neg"] = k_neg;
  j["groups_evaluated"] = groups_evaluated;
  j["groups_skipped"] = groups_skipped;
  j["seed"] = seed;
  j["config_hash"] = config_hash;
  return j;
}

MetricReport summarize(std::span<const ScoredGroup> groups, Centricity centricity, std::size_t k) {
  MetricReport report;
  report.centricity = centricity;
  report.k = k;
  std::vector<ScoredGroup> usable;
  double auc_total = 0.0;
  for (const auto& g : groups) {
    const auto a = auc(g.candidates);
    if (!a) {
      ++report.groups_skipped;
      continue;
    }
    auc_total += *a;
    usable.push_back(g);
  }
  if (usable.empty()) throw std::invalid_argument("evaluate: no group has both a positive and a negative");
  report.groups_evaluated = usable.size();
  report.auc = auc_total / static_cast<double>(usable.size());
  report.gauc = gauc(usable);
  report.mrr = mrr(usable);
  report.ndcg = ndcg_at_k(usable, k);
  return report;
}

std::vector<ScoredGroup> score_groups(const DcnParameters& params, std::span<const Interaction> events,
                                      const HistoryIndex& index, const InteractionSets& train,
                                      Centricity centricity, const EvalOptions& options) {
  const std::size_t max_len = params.config.max_seq_len;
  const NegativeMode mode = centricity == Centricity::kUser ? NegativeMode::kItem : NegativeMode::kUser;
  std::map<Id, ScoredGroup> groups;
  std::size_t ordinal = 0;
  for (const auto& e : events) {
    if (e.label != 1) continue;
    const std::uint64_t n = ordinal++;
    const DualSample positive = make_dual_sample(index, e.user, e.item, e.timestamp, max_len, 1);
    SeededRng rng(derive_seed(options.seed, "neg-eval", n, static_cast<std::uint64_t>(centricity)));
    std::vector<DualSample> negatives;
    try {
      negatives = sample_negatives(positive, index, train, mode, options.k_neg, rng);
    } catch (const SamplingError&) {
      // Anchor has met (almost) every candidate in train; the positive alone cannot be ranked.
    }
    std::vector<Id> candidates{centricity == Centricity::kUser ? e.item : e.user};
    for (const auto& s : negatives) candidates.push_back(centricity == Centricity::kUser ? s.item : s.user);
    const std::vector<double> scores = centricity == Centricity::kUser
                                           ? score_next_item(params, positive.item_seq, candidates)
                                           : score_next_user(params, positive.user_seq, candidates);
    const Id key = centricity == Centricity::kUser ? e.user : e.item;
    ScoredGroup& group = groups[key];
    group.key = key;
    for (std::size_t c = 0; c < scores.size(); ++c) group.candidates.push_back({scores[c], c == 0 ? 1 : 0});
  }
  std::vector<ScoredGroup> out;
  out.reserve(groups.size());
  for (auto& [key, g] : groups) out.push_back(std::move(g));
  return out;
}

MetricReport evaluate(const DcnParameters& params, std::span<const Interaction> events, const HistoryIndex& index,
                      const InteractionSets& train, Centricity centricity, const EvalOptions& options) {
  const auto groups = score_groups(params, events, index, train, centricity, options);
  if (groups.empty()) throw std::invalid_argument("evaluate: no positive events to evaluate");
  MetricReport report = summarize(groups, centricity, options.k);
  report.k_neg = options.k_neg;
  report.seed = options.seed;
  report.config_hash = params.config.hash();
  return report;
}

}  // namespace dcn
