#include "dcn/data.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "dcn/errors.hpp"

namespace dcn {

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename T>
bool parse_integer(std::string_view s, T& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

struct RawRow {
  std::string user;
  std::string item;
  std::int64_t timestamp;
  int label;
};

struct Header {
  bool has_label = false;
};

Header parse_header(std::string_view line) {
  const auto fields = split_fields(trim(line));
  std::vector<std::string_view> names;
  for (auto f : fields) names.push_back(trim(f));
  const bool base = names.size() >= 3 && names[0] == "user_id" && names[1] == "item_id" && names[2] == "timestamp";
  if (base && names.size() == 3) return {false};
  if (base && names.size() == 4 && names[3] == "label") return {true};
  throw InputError("line 1: header must be 'user_id,item_id,timestamp[,label]', got '" + std::string(trim(line)) +
                   "'");
}

[[noreturn]] void row_error(std::size_t row, std::size_t line, const std::string& what) {
  throw InputError("row " + std::to_string(row) + " (line " + std::to_string(line) + "): " + what);
}

// Parses the body into raw rows; `row`/`line` numbering is shared by both CSV readers.
template <typename OnRow>
void read_rows(std::istream& in, OnRow&& on_row) {
  std::string line;
  if (!std::getline(in, line)) throw InputError("empty input: missing header");
  const Header header = parse_header(line);
  const std::size_t expected = header.has_label ? 4 : 3;
  std::size_t line_no = 1;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    ++row;
    auto fields = split_fields(trim(line));
    if (fields.size() != expected)
      row_error(row, line_no, "expected " + std::to_string(expected) + " fields, got " +
                                  std::to_string(fields.size()));
    for (auto& f : fields) f = trim(f);
    if (fields[0].empty()) row_error(row, line_no, "empty user_id");
    if (fields[1].empty()) row_error(row, line_no, "empty item_id");
    std::int64_t ts = 0;
    if (!parse_integer(fields[2], ts))
      row_error(row, line_no, "timestamp '" + std::string(fields[2]) + "' is not an integer");
    int label = 1;
    if (header.has_label) {
      if (!parse_integer(fields[3], label) || (label != 0 && label != 1))
        row_error(row, line_no, "label '" + std::string(fields[3]) + "' is not 0 or 1");
    }
    on_row(row, line_no, fields[0], fields[1], ts, label);
  }
  if (row == 0) throw InputError("empty input: no data rows");
}

// Sorts stably by timestamp and assigns dense ids by first appearance.
InteractionLog densify(std::vector<RawRow> rows) {
  std::stable_sort(rows.begin(), rows.end(),
                   [](const RawRow& a, const RawRow& b) { return a.timestamp < b.timestamp; });
  InteractionLog log;
  std::unordered_map<std::string, Id> users;
  std::unordered_map<std::string, Id> items;
  log.events.reserve(rows.size());
  for (auto& r : rows) {
    auto [uit, unew] = users.try_emplace(r.user, static_cast<Id>(log.user_raw.size()));
    if (unew) log.user_raw.push_back(r.user);
    auto [iit, inew] = items.try_emplace(r.item, static_cast<Id>(log.item_raw.size()));
    if (inew) log.item_raw.push_back(r.item);
    log.events.push_back(Interaction{uit->second, iit->second, r.timestamp, r.label});
  }
  return log;
}

std::vector<Interaction> read_dense_csv(const std::filesystem::path& path, Id num_users, Id num_items) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  std::vector<Interaction> events;
  try {
    read_rows(in, [&](std::size_t row, std::size_t line, std::string_view u, std::string_view i, std::int64_t ts,
                      int label) {
      Id uid = 0;
      Id iid = 0;
      if (!parse_integer(u, uid) || uid == 0 || uid > num_users)
        row_error(row, line, "user_id '" + std::string(u) + "' is not a dense id in [1, " +
                                 std::to_string(num_users) + "]");
      if (!parse_integer(i, iid) || iid == 0 || iid > num_items)
        row_error(row, line, "item_id '" + std::string(i) + "' is not a dense id in [1, " +
                                 std::to_string(num_items) + "]");
      events.push_back(Interaction{uid, iid, ts, label});
    });
  } catch (const InputError& e) {
    // An empty split is legal (e.g. after an n-core filter removed everything).
    if (std::string_view(e.what()).starts_with("empty input: no data rows")) return {};
    throw InputError(path.string() + ": " + e.what());
  }
  std::stable_sort(events.begin(), events.end(),
                   [](const Interaction& a, const Interaction& b) { return a.timestamp < b.timestamp; });
  return events;
}

std::vector<Id> last_before(std::span<const HistoryEntry> history, std::int64_t before, std::size_t length) {
  const auto end = std::lower_bound(history.begin(), history.end(), before,
                                    [](const HistoryEntry& e, std::int64_t t) { return e.timestamp < t; });
  const auto count = static_cast<std::size_t>(end - history.begin());
  const std::size_t take = std::min(count, length);
  std::vector<Id> seq(length, 0);
  for (std::size_t k = 0; k < take; ++k) seq[length - take + k] = (end - take + k)->id;
  return seq;
}

}  // namespace

InteractionLog parse_interactions(std::istream& in) {
  std::vector<RawRow> rows;
  read_rows(in, [&](std::size_t, std::size_t, std::string_view u, std::string_view i, std::int64_t ts, int label) {
    rows.push_back(RawRow{std::string(u), std::string(i), ts, label});
  });
  return densify(std::move(rows));
}

InteractionLog ingest_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  try {
    return parse_interactions(in);
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

void write_interactions(std::ostream& out, std::span<const Interaction> events) {
  out << "user_id,item_id,timestamp,label\n";
  for (const auto& e : events) out << e.user << ',' << e.item << ',' << e.timestamp << ',' << e.label << '\n';
}

InteractionLog n_core_filter(const InteractionLog& log, std::size_t n) {
  if (n == 0) throw std::invalid_argument("n_core_filter: n must be at least 1");
  std::vector<bool> keep(log.events.size(), true);
  for (bool changed = true; changed;) {
    changed = false;
    std::vector<std::size_t> user_count(log.user_raw.size(), 0);
    std::vector<std::size_t> item_count(log.item_raw.size(), 0);
    for (std::size_t k = 0; k < log.events.size(); ++k) {
      if (!keep[k]) continue;
      ++user_count[log.events[k].user];
      ++item_count[log.events[k].item];
    }
    for (std::size_t k = 0; k < log.events.size(); ++k) {
      if (keep[k] && (user_count[log.events[k].user] < n || item_count[log.events[k].item] < n)) {
        keep[k] = false;
        changed = true;
      }
    }
  }
  std::vector<RawRow> rows;
  for (std::size_t k = 0; k < log.events.size(); ++k) {
    if (!keep[k]) continue;
    const auto& e = log.events[k];
    rows.push_back(RawRow{log.user_raw[e.user], log.item_raw[e.item], e.timestamp, e.label});
  }
  return densify(std::move(rows));
}

SplitLogs chronological_split(std::span<const Interaction> events, const SplitSpec& spec) {
  if (spec.valid_end < spec.train_end)
    throw InputError("split boundaries must be non-decreasing, got train_end=" + std::to_string(spec.train_end) +
                     " valid_end=" + std::to_string(spec.valid_end));
  SplitLogs out;
  for (const auto& e : events) {
    if (e.timestamp < spec.train_end)
      out.train.push_back(e);
    else if (e.timestamp < spec.valid_end)
      out.valid.push_back(e);
    else
      out.test.push_back(e);
  }
  return out;
}

HistoryIndex::HistoryIndex(Id num_users, Id num_items, std::span<const Interaction> events)
    : items_of_user_(std::size_t{num_users} + 1), users_of_item_(std::size_t{num_items} + 1) {
  std::vector<const Interaction*> sorted;
  for (const auto& e : events) {
    if (e.label != 1) continue;
    if (e.user == 0 || e.user > num_users || e.item == 0 || e.item > num_items)
      throw std::out_of_range("HistoryIndex: event (" + std::to_string(e.user) + "," + std::to_string(e.item) +
                              ") outside the id space");
    sorted.push_back(&e);
  }
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const Interaction* a, const Interaction* b) { return a->timestamp < b->timestamp; });
  for (const Interaction* e : sorted) {
    items_of_user_[e->user].push_back({e->item, e->timestamp});
    users_of_item_[e->item].push_back({e->user, e->timestamp});
  }
}

std::span<const HistoryEntry> HistoryIndex::items_of(Id user) const {
  if (user >= items_of_user_.size()) return {};
  return items_of_user_[user];
}

std::span<const HistoryEntry> HistoryIndex::users_of(Id item) const {
  if (item >= users_of_item_.size()) return {};
  return users_of_item_[item];
}

std::vector<Id> HistoryIndex::item_sequence(Id user, std::int64_t before, std::size_t length) const {
  return last_before(items_of(user), before, length);
}

std::vector<Id> HistoryIndex::user_sequence(Id item, std::int64_t before, std::size_t length) const {
  return last_before(users_of(item), before, length);
}

InteractionSets::InteractionSets(Id num_users, Id num_items, std::span<const Interaction> events)
    : items_of_user_(std::size_t{num_users} + 1), users_of_item_(std::size_t{num_items} + 1) {
  for (const auto& e : events) {
    if (e.user == 0 || e.user > num_users || e.item == 0 || e.item > num_items)
      throw std::out_of_range("InteractionSets: event outside the id space");
    items_of_user_[e.user].push_back(e.item);
    users_of_item_[e.item].push_back(e.user);
  }
  for (auto* lists : {&items_of_user_, &users_of_item_})
    for (auto& v : *lists) {
      std::sort(v.begin(), v.end());
      v.erase(std::unique(v.begin(), v.end()), v.end());
    }
}

bool InteractionSets::contains(Id user, Id item) const {
  if (user >= items_of_user_.size()) return false;
  const auto& v = items_of_user_[user];
  return std::binary_search(v.begin(), v.end(), item);
}

DualSample make_dual_sample(const HistoryIndex& index, Id user, Id item, std::int64_t timestamp,
                            std::size_t max_len, int label) {
  if (max_len == 0) throw std::invalid_argument("make_dual_sample: sequence length must be at least 1");
  return DualSample{user,
                    item,
                    timestamp,
                    index.item_sequence(user, timestamp, max_len),
                    index.user_sequence(item, timestamp, max_len),
                    label};
}

std::vector<DualSample> sample_negatives(const DualSample& positive, const HistoryIndex& index,
                                         const InteractionSets& train, NegativeMode mode, std::size_t k,
                                         SeededRng& rng) {
  if (k == 0) throw std::invalid_argument("sample_negatives: k must be at least 1");
  constexpr int kMaxAttempts = 1000;
  const bool item_mode = mode == NegativeMode::kItem;
  const Id catalog = item_mode ? index.num_items() : index.num_users();
  const Id anchor = item_mode ? positive.user : positive.item;
  const auto seen = item_mode ? train.items_of(anchor) : train.users_of(anchor);
  const Id target = item_mode ? positive.item : positive.user;
  const bool target_seen = std::binary_search(seen.begin(), seen.end(), target);
  const std::size_t excluded = seen.size() + (target_seen || target == 0 ? 0 : 1);
  const std::size_t pool = catalog > excluded ? catalog - excluded : 0;
  if (pool == 0)
    throw SamplingError(std::string("sample_negatives: empty candidate pool for ") +
                        (item_mode ? "user " : "item ") + std::to_string(anchor));
  if (pool < k)
    throw SamplingError("sample_negatives: pool of " + std::to_string(pool) + " cannot supply " +
                        std::to_string(k) + " distinct negatives");

  const std::size_t len = positive.item_seq.size();
  std::vector<Id> chosen;
  std::vector<DualSample> out;
  out.reserve(k);
  for (std::size_t n = 0; n < k; ++n) {
    Id candidate = 0;
    for (int attempt = 0;; ++attempt) {
      if (attempt == kMaxAttempts)
        throw SamplingError("sample_negatives: no valid candidate after " + std::to_string(kMaxAttempts) +
                            " attempts");
      candidate = static_cast<Id>(rng.below(catalog) + 1);
      if (candidate == target || std::binary_search(seen.begin(), seen.end(), candidate) ||
          std::find(chosen.begin(), chosen.end(), candidate) != chosen.end())
        continue;
      break;
    }
    chosen.push_back(candidate);
    DualSample neg = positive;
    neg.label = 0;
    if (item_mode) {
      neg.item = candidate;
      neg.user_seq = index.user_sequence(candidate, positive.timestamp, positive.user_seq.size());
    } else {
      neg.user = candidate;
      neg.item_seq = index.item_sequence(candidate, positive.timestamp, len);
    }
    out.push_back(std::move(neg));
  }
  return out;
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t count, std::size_t batch_size, SeededRng& rng,
                                                   bool shuffle) {
  if (batch_size == 0) throw std::invalid_argument("make_batches: batch size must be at least 1");
  std::vector<std::size_t> order(count);
  for (std::size_t k = 0; k < count; ++k) order[k] = k;
  if (shuffle)
    for (std::size_t k = count; k > 1; --k) std::swap(order[k - 1], order[rng.below(k)]);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < count; start += batch_size) {
    const std::size_t end = std::min(count, start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

PreparedData prepare(const InteractionLog& log, std::size_t n_core, const SplitSpec& spec) {
  const InteractionLog filtered = n_core_filter(log, n_core);
  PreparedData data;
  data.splits = chronological_split(filtered.events, spec);
  data.num_users = filtered.num_users();
  data.num_items = filtered.num_items();
  data.n_core = n_core;
  data.split_spec = spec;
  data.user_raw = filtered.user_raw;
  data.item_raw = filtered.item_raw;
  return data;
}

void write_prepared(const PreparedData& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto write_split = [&](const char* name, const std::vector<Interaction>& events) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw InputError("cannot write " + (dir / name).string());
    write_interactions(out, events);
  };
  write_split("train.csv", data.splits.train);
  write_split("valid.csv", data.splits.valid);
  write_split("test.csv", data.splits.test);

  nlohmann::ordered_json meta;
  meta["format"] = "dcn-prepared-v1";
  meta["n_core"] = data.n_core;
  meta["train_end"] = data.split_spec.train_end;
  meta["valid_end"] = data.split_spec.valid_end;
  meta["num_users"] = data.num_users;
  meta["num_items"] = data.num_items;
  meta["counts"] = {{"train", data.splits.train.size()},
                    {"valid", data.splits.valid.size()},
                    {"test", data.splits.test.size()}};
  meta["user_ids"] = std::vector<std::string>(data.user_raw.begin() + 1, data.user_raw.end());
  meta["item_ids"] = std::vector<std::string>(data.item_raw.begin() + 1, data.item_raw.end());
  std::ofstream out(dir / "metadata.json", std::ios::binary);
  if (!out) throw InputError("cannot write " + (dir / "metadata.json").string());
  out << meta.dump(2) << '\n';
}

PreparedData read_prepared(const std::filesystem::path& dir) {
  std::ifstream in(dir / "metadata.json");
  if (!in) throw InputError("cannot open " + (dir / "metadata.json").string());
  nlohmann::json meta;
  try {
    in >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw InputError((dir / "metadata.json").string() + ": " + e.what());
  }
  PreparedData data;
  try {
    data.num_users = meta.at("num_users").get<Id>();
    data.num_items = meta.at("num_items").get<Id>();
    data.n_core = meta.at("n_core").get<std::size_t>();
    data.split_spec = {meta.at("train_end").get<std::int64_t>(), meta.at("valid_end").get<std::int64_t>()};
    for (const auto& s : meta.at("user_ids")) data.user_raw.push_back(s.get<std::string>());
    for (const auto& s : meta.at("item_ids")) data.item_raw.push_back(s.get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw InputError((dir / "metadata.json").string() + ": " + e.what());
  }
  data.splits.train = read_dense_csv(dir / "train.csv", data.num_users, data.num_items);
  data.splits.valid = read_dense_csv(dir / "valid.csv", data.num_users, data.num_items);
  data.splits.test = read_dense_csv(dir / "test.csv", data.num_users, data.num_items);
  return data;
}

}  // namespace dcn
