#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dcn/data.hpp"
#include "dcn/metrics.hpp"
#include "dcn/model.hpp"

namespace dcn {

// kUser ranks items per user with the next-item tower; kItem ranks users per
// item with the next-user tower.
enum class Centricity { kUser, kItem };

std::string to_string(Centricity c);
Centricity parse_centricity(std::string_view s);

struct MetricReport {
  Centricity centricity = Centricity::kUser;
  double auc = 0.0;
  double gauc = 0.0;
  double mrr = 0.0;
  double ndcg = 0.0;
  std::size_t k = 10;
  std::size_t k_neg = 49;
  std::size_t groups_evaluated = 0;
  std::size_t groups_skipped = 0;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;

  nlohmann::ordered_json to_json() const;
};

// Reduces scored groups into a report. Groups lacking either class are
// skipped; AUC, MRR and NDCG average the remaining groups unweighted.
// Throws std::invalid_argument when no group is evaluable.
MetricReport summarize(std::span<const ScoredGroup> groups, Centricity centricity, std::size_t k);

struct EvalOptions {
  std::size_t k_neg = 49;
  std::size_t k = 10;
  std::uint64_t seed = 0;
};

// Builds one positive plus k_neg sampled negatives per positive event, scores
// them with the matching tower and pools candidates by user or item. The
// negatives for event n come from derive_seed(seed, "neg-eval", n, centricity).
std::vector<ScoredGroup> score_groups(const DcnParameters& params, std::span<const Interaction> events,
                                      const HistoryIndex& index, const InteractionSets& train,
                                      Centricity centricity, const EvalOptions& options);

// Throws std::invalid_argument when `events` holds no positive.
MetricReport evaluate(const DcnParameters& params, std::span<const Interaction> events, const HistoryIndex& index,
                      const InteractionSets& train, Centricity centricity, const EvalOptions& options);

}  // namespace dcn
