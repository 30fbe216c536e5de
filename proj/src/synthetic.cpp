#include "dcn/synthetic.hpp"

#include <string>
#include <stdexcept>
#include <vector>

namespace dcn {

InteractionLog make_planted_log(const SyntheticSpec& spec) {
  if (spec.num_users == 0 || spec.num_items == 0 || spec.num_interactions == 0)
    throw std::invalid_argument("make_planted_log: empty user, item or event count");
  if (spec.clusters == 0 || spec.clusters > spec.num_users || spec.clusters > spec.num_items)
    throw std::invalid_argument("make_planted_log: clusters must be between 1 and the smaller catalog");
  if (!(spec.noise >= 0.0 && spec.noise <= 1.0) || !(spec.drift_fraction >= 0.0 && spec.drift_fraction <= 1.0))
    throw std::invalid_argument("make_planted_log: noise and drift_fraction must lie in [0, 1]");

  SeededRng rng(derive_seed(spec.seed, "synthetic"));
  const std::size_t k = spec.clusters;
  const auto n = static_cast<std::int64_t>(spec.num_interactions);

  std::vector<std::size_t> user_cluster(spec.num_users + 1);
  for (Id u = 1; u <= spec.num_users; ++u) user_cluster[u] = (u - 1) % k;
  struct Item {
    std::size_t cluster;
    std::int64_t drift_at;  // first timestamp in the next cluster; n + 1 when the item never drifts
  };
  std::vector<Item> items(spec.num_items + 1);
  for (Id i = 1; i <= spec.num_items; ++i) {
    items[i].cluster = (i - 1) % k;
    items[i].drift_at = n + 1;
    if (rng.uniform() < spec.drift_fraction)
      items[i].drift_at = 1 + static_cast<std::int64_t>(rng.uniform(0.2, 0.8) * static_cast<double>(n));
  }
  const auto cluster_at = [&](Id i, std::int64_t t) {
    return t >= items[i].drift_at ? (items[i].cluster + 1) % k : items[i].cluster;
  };

  std::vector<Id> members;
  std::vector<Interaction> raw;
  raw.reserve(spec.num_interactions);
  for (std::int64_t t = 1; t <= n; ++t) {
    const Id u = static_cast<Id>(rng.below(spec.num_users) + 1);
    Id item = 0;
    if (rng.uniform() >= spec.noise) {
      members.clear();
      for (Id i = 1; i <= spec.num_items; ++i)
        if (cluster_at(i, t) == user_cluster[u]) members.push_back(i);
      if (!members.empty()) item = members[rng.below(members.size())];
    }
    if (item == 0) item = static_cast<Id>(rng.below(spec.num_items) + 1);
    raw.push_back({u, item, t, 1});
  }

  // Dense ids follow first appearance, as ingestion would assign them.
  std::vector<Id> user_map(spec.num_users + 1, 0);
  std::vector<Id> item_map(spec.num_items + 1, 0);
  InteractionLog log;
  for (auto e : raw) {
    if (user_map[e.user] == 0) {
      user_map[e.user] = static_cast<Id>(log.user_raw.size());
      log.user_raw.push_back("u" + std::to_string(e.user));
    }
    if (item_map[e.item] == 0) {
      item_map[e.item] = static_cast<Id>(log.item_raw.size());
      log.item_raw.push_back("i" + std::to_string(e.item));
    }
    e.user = user_map[e.user];
    e.item = item_map[e.item];
    log.events.push_back(e);
  }
  return log;
}

SplitSpec planted_split(std::size_t num_interactions) {
  const auto n = static_cast<std::int64_t>(num_interactions);
  return SplitSpec{1 + n * 8 / 10, 1 + n * 9 / 10};
}

}  // namespace dcn
