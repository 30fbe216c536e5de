#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dcn/data.hpp"
#include "dcn/evaluator.hpp"
#include "dcn/model.hpp"
#include "dcn/optim.hpp"

namespace dcn {

struct TrainConfig {
  std::size_t embed_dim = 32;
  std::size_t batch_size = 200;
  double lr = 1e-3;
  std::size_t max_seq_len = 20;
  std::size_t epochs_max = 50;
  std::size_t patience = 5;
  double lambda_repr = 1e-4;
  double lambda_interest = 1e-4;
  double lambda_embed = 1e-7;
  Backbone backbone = Backbone::kGru;
  StaticTowerInput static_tower_input = StaticTowerInput::kEmbeddings;
  bool aux_on_negatives = true;
  bool next_item_only = false;  // single-encoder baseline: item encoder, next-item tower, LogLoss, penalty
  std::size_t k_neg_train = 1;
  std::size_t k_neg_eval = 49;
  std::size_t top_k = 10;
  std::uint64_t seed = 42;

  // Throws InputError on a non-positive size, rate or negative weight.
  void validate() const;
  ModelConfig model_config(Id num_users, Id num_items) const;
  LossWeights loss_weights() const;
};

// Prepared splits plus the indexes every stage shares.
struct Dataset {
  SplitLogs splits;
  Id num_users = 0;
  Id num_items = 0;
  HistoryIndex index;     // positives of all splits; lookups only see strictly earlier events
  InteractionSets train;  // (user, item) pairs of the train split

  Dataset() = default;
  Dataset(SplitLogs splits, Id num_users, Id num_items);
  static Dataset from_prepared(const PreparedData& data);
};

struct EpochRecord {
  std::size_t epoch = 0;
  double loss_item = 0.0;
  double loss_repr = 0.0;
  double loss_interest = 0.0;
  double loss_reg = 0.0;
  double loss_total = 0.0;
  double val_auc = 0.0;  // NaN when the validation split has no positives
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;

  // `epoch,L_i,L_e,L_p,L_total,val_auc` with 17 significant digits.
  void write_csv(std::ostream& out) const;
};

struct TrainResult {
  DcnParameters params;  // the best epoch's parameters
  TrainHistory history;
  std::string init_rng_state;
};

// One Adam step on one batch. Throws NumericError on a non-finite loss.
LossValues train_step(DcnParameters& params, Adam& adam, std::span<const DualSample> batch,
                      const LossWeights& weights, ForwardMode mode);

// Train rows in log order. Each positive is followed by k_neg_train item-mode
// negatives drawn from derive_seed(seed, "neg-train", epoch, ordinal); label-0
// rows are kept as they are.
std::vector<DualSample> epoch_samples(const TrainConfig& config, const Dataset& data, std::size_t epoch);

// Called after every epoch with the record just appended.
using EpochCallback = std::function<void(const EpochRecord&)>;

// Epochs of shuffled batches; after each, user-centric validation AUC. Keeps
// the best epoch and stops once more than `patience` consecutive epochs fail
// to improve on it. Throws InputError on an empty train split and
// NumericError naming epoch and batch on a non-finite loss or gradient.
TrainResult train(const TrainConfig& config, const Dataset& data, const EpochCallback& on_epoch = {});

struct RunReport {
  std::string label;
  double lambda_repr = 0.0;
  double lambda_interest = 0.0;
  std::uint64_t seed = 0;
  MetricReport user;
  MetricReport item;
  TrainHistory history;
};

// Trains with `config` and evaluates both centricities on the test split.
RunReport train_and_test(const TrainConfig& config, const Dataset& data, std::string label);

// The four DR x DI combinations: lambda_repr zeroed without DR, lambda_interest without DI.
std::vector<RunReport> ablate(const TrainConfig& config, const Dataset& data);

inline const std::vector<double> kDefaultSweepGrid{1e-6, 1e-5, 1e-4, 1e-3};

// One run per value v with lambda_repr = lambda_interest = v, all from the same root seed.
std::vector<RunReport> sweep_lambda(const TrainConfig& config, const Dataset& data, std::span<const double> grid);

void write_table_csv(std::ostream& out, std::span<const RunReport> rows);
nlohmann::ordered_json table_json(std::span<const RunReport> rows);

// Versioned little-endian binary: magic, version, model config, its hash and
// canonical form, rng state, then every parameter by name with its shape.
void save_checkpoint(const DcnParameters& params, const std::string& rng_state, const std::filesystem::path& path);

struct Checkpoint {
  DcnParameters params;
  std::string rng_state;
};

// Throws ArtifactError on a missing, truncated or corrupt file.
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Loads into existing parameters. Shapes are checked first (the error names
// the tensor), then the config hash. Throws ArtifactError.
std::string load_into(const std::filesystem::path& path, DcnParameters& params);

}  // namespace dcn
