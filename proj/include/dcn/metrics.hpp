#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "dcn/ops.hpp"

namespace dcn {

struct ScoredCandidate {
  double score = 0.0;
  int label = 0;
};

// Candidates ranked for one user (user-centric) or one item (item-centric).
struct ScoredGroup {
  Id key = 0;
  std::vector<ScoredCandidate> candidates;
};

// Mann-Whitney pairwise statistic with ties counted 1/2. nullopt when the
// input lacks a positive or a negative.
std::optional<double> auc(std::span<const ScoredCandidate> candidates);
// Same statistic through average ranks; an independent route for cross-checks.
std::optional<double> auc_rank_sum(std::span<const ScoredCandidate> candidates);

// Per-group AUC weighted by the group's positive count. Throws
// std::invalid_argument when no group has both classes.
double gauc(std::span<const ScoredGroup> groups);

// 1-based rank of the best-ranked positive, ties broken with positives last.
// nullopt for a group without positives.
std::optional<std::size_t> first_positive_rank(std::span<const ScoredCandidate> candidates);

// Mean over groups of 1 / first_positive_rank. Throws std::invalid_argument
// on empty input or a group without positives.
double mrr(std::span<const ScoredGroup> groups);

// Binary-relevance NDCG@k of one group under the positive-last tie-break.
double ndcg_at_k(std::span<const ScoredCandidate> candidates, std::size_t k);
// Mean over groups. Throws std::invalid_argument on empty input or k == 0.
double ndcg_at_k(std::span<const ScoredGroup> groups, std::size_t k);

}  // namespace dcn
