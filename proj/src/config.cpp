#include "dcn/config.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "dcn/errors.hpp"

namespace dcn {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view expected) {
  throw InputError("config key '" + std::string(key) + "': '" + std::string(value) + "' is not " +
                   std::string(expected));
}

template <typename T>
T parse_unsigned(std::string_view key, std::string_view value) {
  T out{};
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size()) bad_value(key, value, "a non-negative integer");
  return out;
}

std::int64_t parse_int(std::string_view key, std::string_view value) {
  std::int64_t out = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size()) bad_value(key, value, "an integer");
  return out;
}

double parse_double(std::string_view key, std::string_view value) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size()) bad_value(key, value, "a number");
  return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  bad_value(key, value, "true or false");
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> k{
      "input",      "data",        "out",          "checkpoint", "n_core",   "train_end",   "valid_end",
      "embed_dim",  "batch_size",  "lr",           "max_seq_len", "epochs_max", "patience", "lambda_e",
      "lambda_p",   "lambda",      "backbone",     "static_tower_input", "aux_on_negatives", "k_neg_train",
      "k_neg_eval", "top_k",       "seed",         "centricity", "grid"};
  return k;
}

void RunConfig::set(std::string_view key, std::string_view raw) {
  const std::string_view value = trim(raw);
  TrainConfig& t = train;
  if (key == "input") input = value;
  else if (key == "data") data = value;
  else if (key == "out") out = value;
  else if (key == "checkpoint") checkpoint = value;
  else if (key == "n_core") n_core = parse_unsigned<std::size_t>(key, value);
  else if (key == "train_end") train_end = value == "auto" ? std::nullopt : std::optional(parse_int(key, value));
  else if (key == "valid_end") valid_end = value == "auto" ? std::nullopt : std::optional(parse_int(key, value));
  else if (key == "embed_dim") t.embed_dim = parse_unsigned<std::size_t>(key, value);
  else if (key == "batch_size") t.batch_size = parse_unsigned<std::size_t>(key, value);
  else if (key == "lr") t.lr = parse_double(key, value);
  else if (key == "max_seq_len") t.max_seq_len = parse_unsigned<std::size_t>(key, value);
  else if (key == "epochs_max") t.epochs_max = parse_unsigned<std::size_t>(key, value);
  else if (key == "patience") t.patience = parse_unsigned<std::size_t>(key, value);
  else if (key == "lambda_e") t.lambda_repr = parse_double(key, value);
  else if (key == "lambda_p") t.lambda_interest = parse_double(key, value);
  else if (key == "lambda") t.lambda_embed = parse_double(key, value);
  else if (key == "backbone") t.backbone = parse_backbone(value);
  else if (key == "static_tower_input") t.static_tower_input = parse_static_tower_input(value);
  else if (key == "aux_on_negatives") t.aux_on_negatives = parse_bool(key, value);
  else if (key == "k_neg_train") t.k_neg_train = parse_unsigned<std::size_t>(key, value);
  else if (key == "k_neg_eval") t.k_neg_eval = parse_unsigned<std::size_t>(key, value);
  else if (key == "top_k") t.top_k = parse_unsigned<std::size_t>(key, value);
  else if (key == "seed") t.seed = parse_unsigned<std::uint64_t>(key, value);
  else if (key == "centricity") {
    if (value != "both") parse_centricity(value);
    centricity = value;
  } else if (key == "grid") {
    grid.clear();
    std::string_view rest = value;
    while (!rest.empty()) {
      const auto comma = rest.find(',');
      grid.push_back(parse_double(key, trim(rest.substr(0, comma))));
      rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
    }
    if (grid.empty()) bad_value(key, value, "a comma-separated list of numbers");
  } else {
    throw InputError("unknown config key '" + std::string(key) + "'");
  }
}

std::string RunConfig::to_text() const {
  const TrainConfig& t = train;
  std::ostringstream s;
  std::string grid_text;
  for (std::size_t k = 0; k < grid.size(); ++k) grid_text += (k ? "," : "") + format_double(grid[k]);
  s << "input = " << input << "\n"
    << "data = " << data << "\n"
    << "out = " << out << "\n"
    << "checkpoint = " << checkpoint << "\n"
    << "n_core = " << n_core << "\n"
    << "train_end = " << (train_end ? std::to_string(*train_end) : "auto") << "\n"
    << "valid_end = " << (valid_end ? std::to_string(*valid_end) : "auto") << "\n"
    << "embed_dim = " << t.embed_dim << "\n"
    << "batch_size = " << t.batch_size << "\n"
    << "lr = " << format_double(t.lr) << "\n"
    << "max_seq_len = " << t.max_seq_len << "\n"
    << "epochs_max = " << t.epochs_max << "\n"
    << "patience = " << t.patience << "\n"
    << "lambda_e = " << format_double(t.lambda_repr) << "\n"
    << "lambda_p = " << format_double(t.lambda_interest) << "\n"
    << "lambda = " << format_double(t.lambda_embed) << "\n"
    << "backbone = " << to_string(t.backbone) << "\n"
    << "static_tower_input = " << to_string(t.static_tower_input) << "\n"
    << "aux_on_negatives = " << (t.aux_on_negatives ? "true" : "false") << "\n"
    << "k_neg_train = " << t.k_neg_train << "\n"
    << "k_neg_eval = " << t.k_neg_eval << "\n"
    << "top_k = " << t.top_k << "\n"
    << "seed = " << t.seed << "\n"
    << "centricity = " << centricity << "\n"
    << "grid = " << grid_text << "\n";
  return s.str();
}

std::filesystem::path RunConfig::checkpoint_path() const {
  return checkpoint.empty() ? std::filesystem::path(out) / "model.ckpt" : std::filesystem::path(checkpoint);
}

std::vector<Centricity> RunConfig::centricities() const {
  if (centricity == "both") return {Centricity::kUser, Centricity::kItem};
  return {parse_centricity(centricity)};
}

void apply_config_text(RunConfig& config, std::istream& in, const std::string& origin) {
  std::set<std::string> seen;
  std::string line;
  for (std::size_t number = 1; std::getline(in, line); ++number) {
    const std::string_view text = trim(line);
    if (text.empty() || text.front() == '#') continue;
    const auto eq = text.find('=');
    const std::string where = origin + " line " + std::to_string(number) + ": ";
    if (eq == std::string_view::npos) throw InputError(where + "expected 'key = value'");
    const std::string key(trim(text.substr(0, eq)));
    if (!seen.insert(key).second) throw InputError(where + "key '" + key + "' repeated");
    try {
      config.set(key, text.substr(eq + 1));
    } catch (const InputError& err) {
      throw InputError(where + err.what());
    }
  }
}

void apply_config_file(RunConfig& config, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config file " + path.string());
  apply_config_text(config, in, path.string());
}

SplitSpec resolve_split(const RunConfig& config, std::span<const Interaction> events) {
  const auto at_fraction = [&events](std::size_t num, std::size_t den) -> std::int64_t {
    if (events.empty()) return 0;
    return events[std::min(events.size() - 1, events.size() * num / den)].timestamp;
  };
  SplitSpec spec;
  spec.train_end = config.train_end ? *config.train_end : at_fraction(8, 10);
  spec.valid_end = config.valid_end ? *config.valid_end : at_fraction(9, 10);
  return spec;
}

}  // namespace dcn
