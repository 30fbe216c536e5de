#include "dcn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace dcn {

namespace {

void check_labels(std::span<const ScoredCandidate> candidates) {
  for (const auto& c : candidates)
    if (c.label != 0 && c.label != 1)
      throw std::invalid_argument("metric label must be 0 or 1, got " + std::to_string(c.label));
}

// Indices ordered by score descending; among equal scores negatives come first.
std::vector<std::size_t> ranking(std::span<const ScoredCandidate> candidates) {
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (candidates[a].score != candidates[b].score) return candidates[a].score > candidates[b].score;
    return candidates[a].label < candidates[b].label;
  });
  return order;
}

std::size_t count_positives(std::span<const ScoredCandidate> candidates) {
  return static_cast<std::size_t>(
      std::count_if(candidates.begin(), candidates.end(), [](const ScoredCandidate& c) { return c.label == 1; }));
}

}  // namespace

std::optional<double> auc(std::span<const ScoredCandidate> candidates) {
  check_labels(candidates);
  double wins = 0.0;
  std::size_t pairs = 0;
  for (const auto& p : candidates) {
    if (p.label != 1) continue;
    for (const auto& n : candidates) {
      if (n.label != 0) continue;
      ++pairs;
      if (p.score > n.score)
        wins += 1.0;
      else if (p.score == n.score)
        wins += 0.5;
    }
  }
  if (pairs == 0) return std::nullopt;
  return wins / static_cast<double>(pairs);
}

std::optional<double> auc_rank_sum(std::span<const ScoredCandidate> candidates) {
  check_labels(candidates);
  const std::size_t n = candidates.size();
  const std::size_t n_pos = count_positives(candidates);
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return candidates[a].score < candidates[b].score; });
  double pos_rank_sum = 0.0;
  for (std::size_t lo = 0; lo < n;) {
    std::size_t hi = lo;
    while (hi < n && candidates[order[hi]].score == candidates[order[lo]].score) ++hi;
    const double mid_rank = 0.5 * static_cast<double>(lo + 1 + hi);
    for (std::size_t k = lo; k < hi; ++k)
      if (candidates[order[k]].label == 1) pos_rank_sum += mid_rank;
    lo = hi;
  }
  const double p = static_cast<double>(n_pos);
  return (pos_rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(n_neg));
}

double gauc(std::span<const ScoredGroup> groups) {
  double weighted = 0.0;
  double total = 0.0;
  for (const auto& g : groups) {
    const auto a = auc(g.candidates);
    if (!a) continue;
    const double w = static_cast<double>(count_positives(g.candidates));
    weighted += w * *a;
    total += w;
  }
  if (total == 0.0) throw std::invalid_argument("gauc: no group has both a positive and a negative");
  return weighted / total;
}

std::optional<std::size_t> first_positive_rank(std::span<const ScoredCandidate> candidates) {
  check_labels(candidates);
  const auto order = ranking(candidates);
  for (std::size_t r = 0; r < order.size(); ++r)
    if (candidates[order[r]].label == 1) return r + 1;
  return std::nullopt;
}

double mrr(std::span<const ScoredGroup> groups) {
  if (groups.empty()) throw std::invalid_argument("mrr: no groups");
  double total = 0.0;
  for (const auto& g : groups) {
    const auto rank = first_positive_rank(g.candidates);
    if (!rank) throw std::invalid_argument("mrr: group " + std::to_string(g.key) + " has no positive");
    total += 1.0 / static_cast<double>(*rank);
  }
  return total / static_cast<double>(groups.size());
}

double ndcg_at_k(std::span<const ScoredCandidate> candidates, std::size_t k) {
  if (k == 0) throw std::invalid_argument("ndcg_at_k: k must be >= 1");
  check_labels(candidates);
  const auto order = ranking(candidates);
  const std::size_t cutoff = std::min(k, order.size());
  double dcg = 0.0;
  for (std::size_t r = 0; r < cutoff; ++r)
    if (candidates[order[r]].label == 1) dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  const std::size_t ideal = std::min(k, count_positives(candidates));
  double idcg = 0.0;
  for (std::size_t r = 0; r < ideal; ++r) idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  return idcg == 0.0 ? 0.0 : dcg / idcg;
}

double ndcg_at_k(std::span<const ScoredGroup> groups, std::size_t k) {
  if (groups.empty()) throw std::invalid_argument("ndcg_at_k: no groups");
  double total = 0.0;
  for (const auto& g : groups) total += ndcg_at_k(g.candidates, k);
  return total / static_cast<double>(groups.size());
}

}  // namespace dcn
