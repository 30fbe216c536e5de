#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "dcn/evaluator.hpp"
#include "dcn/metrics.hpp"
#include "dcn/synthetic.hpp"

namespace dcn {
namespace {

std::vector<ScoredCandidate> group_of(std::vector<int> labels, std::vector<double> scores) {
  std::vector<ScoredCandidate> out;
  for (std::size_t k = 0; k < labels.size(); ++k) out.push_back({scores[k], labels[k]});
  return out;
}

std::vector<ScoredCandidate> random_group(SeededRng& rng, std::size_t size, bool coarse) {
  std::vector<ScoredCandidate> g;
  for (std::size_t k = 0; k < size; ++k) {
    const double s = coarse ? static_cast<double>(rng.below(4)) : rng.uniform();
    g.push_back({s, rng.uniform() < 0.3 ? 1 : 0});
  }
  return g;
}

TEST(Auc, Examples) {
  EXPECT_DOUBLE_EQ(*auc(group_of({1, 0, 0}, {0.9, 0.1, 0.5})), 1.0);
  EXPECT_DOUBLE_EQ(*auc(group_of({1, 0, 0}, {0.3, 0.5, 0.1})), 0.5);
  EXPECT_DOUBLE_EQ(*auc(group_of({1, 0}, {0.4, 0.4})), 0.5);
  EXPECT_FALSE(auc(group_of({1, 1}, {0.4, 0.2})).has_value());
  EXPECT_FALSE(auc(group_of({0}, {0.4})).has_value());
}

TEST(Auc, PairwiseEqualsRankSum) {
  SeededRng rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto g = random_group(rng, 2 + rng.below(60), trial % 2 == 0);
    const auto a = auc(g);
    const auto b = auc_rank_sum(g);
    ASSERT_EQ(a.has_value(), b.has_value());
    if (a) ASSERT_NEAR(*a, *b, 1e-12);
  }
}

TEST(Metrics, InvariantUnderMonotoneTransformAndPermutation) {
  SeededRng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    auto g = random_group(rng, 3 + rng.below(30), trial % 2 == 0);
    g.push_back({0.5, 1});
    g.push_back({0.25, 0});
    std::vector<ScoredCandidate> mapped = g;
    for (auto& c : mapped) c.score = std::exp(3.0 * c.score) - 7.0;
    std::vector<ScoredCandidate> shuffled = g;
    for (std::size_t k = shuffled.size() - 1; k > 0; --k) std::swap(shuffled[k], shuffled[rng.below(k + 1)]);
    for (const auto* other : {&mapped, &shuffled}) {
      EXPECT_NEAR(*auc(*other), *auc(g), 1e-15);
      EXPECT_EQ(first_positive_rank(*other), first_positive_rank(g));
      EXPECT_NEAR(ndcg_at_k(*other, 10), ndcg_at_k(g, 10), 1e-15);
    }
  }
}

TEST(Gauc, WeightedByPositives) {
  const std::vector<ScoredGroup> groups{{1, group_of({1, 1, 0}, {0.9, 0.8, 0.1})},
                                        {2, group_of({1, 0}, {0.5, 0.5})}};
  EXPECT_NEAR(gauc(groups), 2.5 / 3.0, 1e-15);
  const std::vector<ScoredGroup> single{{1, group_of({1, 0, 0}, {0.3, 0.5, 0.1})}};
  EXPECT_DOUBLE_EQ(gauc(single), 0.5);
  const std::vector<ScoredGroup> same{{1, group_of({1, 0, 0}, {0.3, 0.5, 0.1})},
                                      {2, group_of({1, 1, 0, 0}, {0.6, 0.1, 0.05, 0.9})}};
  EXPECT_DOUBLE_EQ(gauc(same), 0.5);
  const std::vector<ScoredGroup> none{{1, group_of({1}, {0.3})}};
  EXPECT_THROW(gauc(none), std::invalid_argument);
}

TEST(Gauc, EqualWeightsGiveUnweightedMean) {
  SeededRng rng(3);
  std::vector<ScoredGroup> groups;
  double mean = 0.0;
  for (Id g = 1; g <= 10; ++g) {
    std::vector<ScoredCandidate> c{{rng.uniform(), 1}, {rng.uniform(), 1}};
    for (int k = 0; k < 5; ++k) c.push_back({rng.uniform(), 0});
    mean += *auc(c) / 10.0;
    groups.push_back({g, c});
  }
  EXPECT_NEAR(gauc(groups), mean, 1e-12);
}

TEST(Mrr, Examples) {
  const std::vector<ScoredGroup> top{{1, group_of({1, 0}, {0.9, 0.1})}};
  EXPECT_DOUBLE_EQ(mrr(top), 1.0);
  const std::vector<ScoredGroup> two{{1, group_of({1, 0}, {0.9, 0.1})},
                                     {2, group_of({0, 0, 0, 1, 0}, {0.9, 0.8, 0.7, 0.6, 0.5})}};
  EXPECT_DOUBLE_EQ(mrr(two), 0.625);
  const std::vector<ScoredGroup> tie{{1, group_of({1, 0}, {0.5, 0.5})}};
  EXPECT_DOUBLE_EQ(mrr(tie), 0.5);
  EXPECT_THROW(mrr(std::vector<ScoredGroup>{}), std::invalid_argument);
  const std::vector<ScoredGroup> no_positive{{1, group_of({0, 0}, {0.5, 0.4})}};
  EXPECT_THROW(mrr(no_positive), std::invalid_argument);
}

TEST(Ndcg, Examples) {
  EXPECT_DOUBLE_EQ(ndcg_at_k(group_of({1, 0, 0}, {0.9, 0.5, 0.1}), 10), 1.0);
  EXPECT_DOUBLE_EQ(ndcg_at_k(group_of({0, 0, 1}, {0.9, 0.5, 0.1}), 10), 0.5);
  std::vector<int> labels(12, 0);
  std::vector<double> scores;
  for (int k = 0; k < 12; ++k) scores.push_back(1.0 - 0.05 * k);
  labels[10] = 1;
  EXPECT_EQ(ndcg_at_k(group_of(labels, scores), 10), 0.0);
  EXPECT_THROW(ndcg_at_k(std::vector<ScoredGroup>{}, 10), std::invalid_argument);
}

TEST(Ndcg, AllPositivesOnTopGiveOne) {
  SeededRng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t pos = 1 + rng.below(5);
    std::vector<ScoredCandidate> g;
    for (std::size_t k = 0; k < pos; ++k) g.push_back({2.0 + rng.uniform(), 1});
    for (int k = 0; k < 20; ++k) g.push_back({rng.uniform(), 0});
    EXPECT_NEAR(ndcg_at_k(g, 10), 1.0, 1e-15);
  }
}

TEST(Summarize, PerfectOracleScoresOne) {
  std::vector<ScoredGroup> groups;
  for (Id g = 1; g <= 20; ++g) {
    std::vector<ScoredCandidate> c{{1.0, 1}};
    for (int k = 0; k < 49; ++k) c.push_back({0.0, 0});
    groups.push_back({g, c});
  }
  groups.push_back({21, {{1.0, 1}}});
  const auto r = summarize(groups, Centricity::kUser, 10);
  EXPECT_EQ(r.auc, 1.0);
  EXPECT_EQ(r.gauc, 1.0);
  EXPECT_EQ(r.mrr, 1.0);
  EXPECT_EQ(r.ndcg, 1.0);
  EXPECT_EQ(r.groups_evaluated, 20u);
  EXPECT_EQ(r.groups_skipped, 1u);
}

TEST(Summarize, RandomScoresAreNearChance) {
  SeededRng rng(5);
  std::vector<ScoredGroup> groups;
  for (Id g = 1; g <= 250; ++g) {
    std::vector<ScoredCandidate> c{{rng.uniform(), 1}};
    for (int k = 0; k < 49; ++k) c.push_back({rng.uniform(), 0});
    groups.push_back({g, c});
  }
  const auto r = summarize(groups, Centricity::kItem, 10);
  EXPECT_NEAR(r.auc, 0.5, 0.05);
  EXPECT_NEAR(r.gauc, 0.5, 0.05);
  for (double m : {r.auc, r.gauc, r.mrr, r.ndcg}) {
    EXPECT_GE(m, 0.0);
    EXPECT_LE(m, 1.0);
  }
}

TEST(Summarize, JsonLayout) {
  const std::vector<ScoredGroup> groups{{1, group_of({1, 0}, {0.9, 0.1})}};
  auto r = summarize(groups, Centricity::kItem, 5);
  const auto j = r.to_json();
  EXPECT_EQ(j["centricity"], "item");
  EXPECT_TRUE(j.contains("ndcg@5"));
  for (const char* key : {"auc", "gauc", "mrr", "k_neg", "groups_evaluated", "groups_skipped", "seed", "config_hash"})
    EXPECT_TRUE(j.contains(key)) << key;
  EXPECT_EQ(parse_centricity("user"), Centricity::kUser);
}

struct SmallWorld {
  PreparedData data;
  HistoryIndex index;
  InteractionSets train;
  DcnParameters params;
};

SmallWorld small_world() {
  SyntheticSpec spec;
  spec.num_users = 40;
  spec.num_items = 60;
  spec.num_interactions = 1500;
  const auto log = make_planted_log(spec);
  SmallWorld w;
  w.data = prepare(log, 2, planted_split(spec.num_interactions));
  std::vector<Interaction> all = w.data.splits.train;
  all.insert(all.end(), w.data.splits.valid.begin(), w.data.splits.valid.end());
  all.insert(all.end(), w.data.splits.test.begin(), w.data.splits.test.end());
  w.index = HistoryIndex(w.data.num_users, w.data.num_items, all);
  w.train = InteractionSets(w.data.num_users, w.data.num_items, w.data.splits.train);
  SeededRng rng(6);
  w.params = DcnParameters(ModelConfig{w.data.num_users, w.data.num_items, 8, 5}, rng);
  return w;
}

TEST(Evaluate, DeterministicAndConsistentCounts) {
  const auto w = small_world();
  for (auto c : {Centricity::kUser, Centricity::kItem}) {
    const EvalOptions options{9, 10, 77};
    const auto a = evaluate(w.params, w.data.splits.test, w.index, w.train, c, options);
    const auto b = evaluate(w.params, w.data.splits.test, w.index, w.train, c, options);
    EXPECT_EQ(a.to_json().dump(), b.to_json().dump());
    EXPECT_EQ(a.k_neg, 9u);
    EXPECT_EQ(a.seed, 77u);
    EXPECT_EQ(a.config_hash, w.params.config.hash());
    const auto groups = score_groups(w.params, w.data.splits.test, w.index, w.train, c, options);
    EXPECT_EQ(a.groups_evaluated + a.groups_skipped, groups.size());
    std::size_t positives = 0;
    for (const auto& g : groups)
      for (const auto& cand : g.candidates) positives += cand.label;
    std::size_t expected = 0;
    for (const auto& e : w.data.splits.test) expected += e.label;
    EXPECT_EQ(positives, expected);
  }
}

TEST(Evaluate, UntrainedModelIsNearChance) {
  const auto w = small_world();
  const auto r = evaluate(w.params, w.data.splits.test, w.index, w.train, Centricity::kUser, EvalOptions{49, 10, 3});
  EXPECT_NEAR(r.auc, 0.5, 0.15);
  EXPECT_THROW(evaluate(w.params, std::vector<Interaction>{}, w.index, w.train, Centricity::kUser, EvalOptions{}),
               std::invalid_argument);
}

}  // namespace
}  // namespace dcn
