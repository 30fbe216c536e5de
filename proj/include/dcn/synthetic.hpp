#pragma once

#include <cstddef>
#include <cstdint>

#include "dcn/data.hpp"

namespace dcn {

// Planted-pattern log: users belong to interest clusters, items belong to a
// cluster that a fraction of them leave for the next cluster at a random
// time (trend drift). Each event picks a random user and, with probability
// 1 - noise, an item currently in that user's cluster; otherwise any item.
// Timestamps are 1..num_interactions.
struct SyntheticSpec {
  Id num_users = 200;
  Id num_items = 300;
  std::size_t num_interactions = 20000;
  std::size_t clusters = 6;
  double noise = 0.05;
  double drift_fraction = 0.3;
  std::uint64_t seed = 7;
};

InteractionLog make_planted_log(const SyntheticSpec& spec);

// 80/10/10 chronological boundaries for timestamps 1..n.
SplitSpec planted_split(std::size_t num_interactions);

}  // namespace dcn
