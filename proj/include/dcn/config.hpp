#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dcn/trainer.hpp"

namespace dcn {

// Everything a command needs, as flat `key = value` pairs. Keys and defaults:
//   input=""            raw interaction CSV (prepare)
//   data=""             prepared split directory (train, evaluate, ablate, sweep)
//   out=out             output directory
//   checkpoint=""       checkpoint path; empty means <out>/model.ckpt
//   n_core=10           core level of the user/item filter
//   train_end=auto      first validation timestamp; auto takes the timestamp at the 80% position
//   valid_end=auto      first test timestamp; auto takes the timestamp at the 90% position
//   centricity=both     user | item | both
//   grid=1e-06,1e-05,0.0001,0.001   contrastive weights for sweep
//   plus every TrainConfig field: embed_dim, batch_size, lr, max_seq_len,
//   epochs_max, patience, lambda_e, lambda_p, lambda, backbone,
//   static_tower_input, aux_on_negatives, k_neg_train, k_neg_eval, top_k, seed.
struct RunConfig {
  TrainConfig train;
  std::string input;
  std::string data;
  std::string out = "out";
  std::string checkpoint;
  std::size_t n_core = 10;
  std::optional<std::int64_t> train_end;
  std::optional<std::int64_t> valid_end;
  std::string centricity = "both";
  std::vector<double> grid = kDefaultSweepGrid;

  static const std::vector<std::string>& keys();

  // Throws InputError on an unknown key or a malformed value.
  void set(std::string_view key, std::string_view value);
  // Every key in keys() order; parsing it back reproduces this config.
  std::string to_text() const;

  std::filesystem::path checkpoint_path() const;
  std::vector<Centricity> centricities() const;
};

// Applies `key = value` lines onto `config`. Blank lines and `#` comments are
// ignored; unknown or repeated keys throw InputError naming the line.
void apply_config_text(RunConfig& config, std::istream& in, const std::string& origin);
void apply_config_file(RunConfig& config, const std::filesystem::path& path);

std::string format_double(double v);

// Boundaries for SplitSpec from the config, resolving `auto` against the log.
SplitSpec resolve_split(const RunConfig& config, std::span<const Interaction> events);

}  // namespace dcn
