#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dcn/ops.hpp"
#include "dcn/rng.hpp"

namespace dcn {

// One event. Ids are dense and start at 1; 0 is the pad id.
struct Interaction {
  Id user = 0;
  Id item = 0;
  std::int64_t timestamp = 0;
  int label = 1;

  friend bool operator==(const Interaction&, const Interaction&) = default;
};

// Events sorted by (timestamp, file order). Dense ids are assigned in order
// of first appearance in that sorted sequence, so re-ingesting a serialized
// log is the identity.
struct InteractionLog {
  std::vector<Interaction> events;
  std::vector<std::string> user_raw{""};  // user_raw[dense id] = raw id; index 0 is the pad
  std::vector<std::string> item_raw{""};

  Id num_users() const { return static_cast<Id>(user_raw.size() - 1); }
  Id num_items() const { return static_cast<Id>(item_raw.size() - 1); }
};

// CSV with header `user_id,item_id,timestamp[,label]`. Raw ids are opaque
// tokens; timestamps are integers; label is 0 or 1 (default 1).
// Throws InputError naming the data row (1-based, header excluded) and file line.
InteractionLog parse_interactions(std::istream& in);
InteractionLog ingest_csv(const std::filesystem::path& path);

// Writes dense ids with the full four-column header.
void write_interactions(std::ostream& out, std::span<const Interaction> events);

// Iteratively drops users and items with fewer than n events until a fixpoint,
// then re-densifies ids.
InteractionLog n_core_filter(const InteractionLog& log, std::size_t n);

// Half-open intervals: train ts < train_end <= valid ts < valid_end <= test ts.
struct SplitSpec {
  std::int64_t train_end = 0;
  std::int64_t valid_end = 0;
};

struct SplitLogs {
  std::vector<Interaction> train;
  std::vector<Interaction> valid;
  std::vector<Interaction> test;
};

SplitLogs chronological_split(std::span<const Interaction> events, const SplitSpec& spec);

struct HistoryEntry {
  Id id = 0;
  std::int64_t timestamp = 0;
};

// Per-user item histories and per-item user histories built from positive
// events, each list in chronological order.
class HistoryIndex {
 public:
  HistoryIndex() = default;
  HistoryIndex(Id num_users, Id num_items, std::span<const Interaction> events);

  Id num_users() const { return static_cast<Id>(items_of_user_.size() - 1); }
  Id num_items() const { return static_cast<Id>(users_of_item_.size() - 1); }

  std::span<const HistoryEntry> items_of(Id user) const;
  std::span<const HistoryEntry> users_of(Id item) const;

  // The last `length` ids with timestamp strictly before `before`, left-padded with 0.
  std::vector<Id> item_sequence(Id user, std::int64_t before, std::size_t length) const;
  std::vector<Id> user_sequence(Id item, std::int64_t before, std::size_t length) const;

 private:
  std::vector<std::vector<HistoryEntry>> items_of_user_;
  std::vector<std::vector<HistoryEntry>> users_of_item_;
};

// Which (user, item) pairs occurred in the training split; defines negative pools.
class InteractionSets {
 public:
  InteractionSets() = default;
  InteractionSets(Id num_users, Id num_items, std::span<const Interaction> events);

  bool contains(Id user, Id item) const;
  std::span<const Id> items_of(Id user) const { return items_of_user_.at(user); }
  std::span<const Id> users_of(Id item) const { return users_of_item_.at(item); }
  Id num_users() const { return static_cast<Id>(items_of_user_.size() - 1); }
  Id num_items() const { return static_cast<Id>(users_of_item_.size() - 1); }

 private:
  std::vector<std::vector<Id>> items_of_user_;  // sorted, unique
  std::vector<std::vector<Id>> users_of_item_;
};

struct DualSample {
  Id user = 0;
  Id item = 0;
  std::int64_t timestamp = 0;
  std::vector<Id> item_seq;  // the user's items before timestamp
  std::vector<Id> user_seq;  // the item's users before timestamp
  int label = 1;

  friend bool operator==(const DualSample&, const DualSample&) = default;
};

DualSample make_dual_sample(const HistoryIndex& index, Id user, Id item, std::int64_t timestamp,
                            std::size_t max_len, int label);

class SamplingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// kItem replaces the target item (user-centric), kUser replaces the target user.
enum class NegativeMode { kItem, kUser };

// k distinct negatives drawn uniformly from ids the anchor never met in train
// (and not the positive target itself). Each negative's opposite-side sequence
// is rebuilt from the negative id's own history before the positive's timestamp.
std::vector<DualSample> sample_negatives(const DualSample& positive, const HistoryIndex& index,
                                         const InteractionSets& train, NegativeMode mode, std::size_t k,
                                         SeededRng& rng);

// Index batches over [0, count). Seeded Fisher-Yates when shuffle is set; the
// final short batch is kept.
std::vector<std::vector<std::size_t>> make_batches(std::size_t count, std::size_t batch_size, SeededRng& rng,
                                                   bool shuffle);

// A prepared dataset on disk: train.csv, valid.csv, test.csv (dense ids) and metadata.json.
struct PreparedData {
  SplitLogs splits;
  Id num_users = 0;
  Id num_items = 0;
  std::size_t n_core = 0;
  SplitSpec split_spec;
  std::vector<std::string> user_raw{""};
  std::vector<std::string> item_raw{""};
};

PreparedData prepare(const InteractionLog& log, std::size_t n_core, const SplitSpec& spec);
void write_prepared(const PreparedData& data, const std::filesystem::path& dir);
PreparedData read_prepared(const std::filesystem::path& dir);

}  // namespace dcn
