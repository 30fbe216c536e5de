#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dcn/errors.hpp"
#include "dcn/synthetic.hpp"
#include "dcn/trainer.hpp"

namespace dcn {
namespace {

namespace fs = std::filesystem;

const Dataset& small_dataset() {
  static const Dataset data = [] {
    SyntheticSpec spec;
    spec.num_users = 40;
    spec.num_items = 60;
    spec.num_interactions = 1500;
    return Dataset::from_prepared(prepare(make_planted_log(spec), 2, planted_split(spec.num_interactions)));
  }();
  return data;
}

TrainConfig small_config() {
  TrainConfig c;
  c.embed_dim = 8;
  c.max_seq_len = 5;
  c.batch_size = 64;
  c.lr = 5e-3;
  c.epochs_max = 3;
  c.patience = 1;
  c.lambda_repr = 1e-2;
  c.lambda_interest = 1e-2;
  c.k_neg_eval = 9;
  c.seed = 5;
  return c;
}

std::string history_csv(const TrainHistory& h) {
  std::ostringstream out;
  h.write_csv(out);
  return out.str();
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class TempDir {
 public:
  explicit TempDir(const std::string& name) : path_(fs::temp_directory_path() / name) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

DcnParameters random_params(const ModelConfig& config, std::uint64_t seed) {
  SeededRng rng(seed);
  return DcnParameters(config, rng);
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  TempDir dir("dcn_ckpt_roundtrip");
  const auto params = random_params(ModelConfig{7, 9, 4, 3, Backbone::kAttention}, 1);
  SeededRng rng(2);
  rng.next_u64();
  save_checkpoint(params, rng.state(), dir.path() / "a.ckpt");
  const auto loaded = load_checkpoint(dir.path() / "a.ckpt");
  EXPECT_EQ(loaded.rng_state, rng.state());
  save_checkpoint(loaded.params, loaded.rng_state, dir.path() / "b.ckpt");
  EXPECT_EQ(file_bytes(dir.path() / "a.ckpt"), file_bytes(dir.path() / "b.ckpt"));
  const auto a = params.all();
  const auto b = loaded.params.all();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_EQ(a[k]->name, b[k]->name);
    EXPECT_EQ(a[k]->value, b[k]->value);
  }
}

TEST(Checkpoint, LoadedModelEvaluatesIdentically) {
  TempDir dir("dcn_ckpt_eval");
  const auto& data = small_dataset();
  const auto params = random_params(small_config().model_config(data.num_users, data.num_items), 3);
  save_checkpoint(params, "", dir.path() / "m.ckpt");
  const auto loaded = load_checkpoint(dir.path() / "m.ckpt");
  for (auto c : {Centricity::kUser, Centricity::kItem}) {
    const EvalOptions options{9, 10, 4};
    EXPECT_EQ(evaluate(params, data.splits.test, data.index, data.train, c, options).to_json().dump(),
              evaluate(loaded.params, data.splits.test, data.index, data.train, c, options).to_json().dump());
  }
}

TEST(Checkpoint, MismatchedDimensionNamesTheTensor) {
  TempDir dir("dcn_ckpt_shape");
  save_checkpoint(random_params(ModelConfig{7, 9, 4, 3}, 1), "", dir.path() / "m.ckpt");
  auto other = random_params(ModelConfig{7, 9, 8, 3}, 1);
  try {
    load_into(dir.path() / "m.ckpt", other);
    FAIL();
  } catch (const ArtifactError& e) {
    EXPECT_NE(std::string(e.what()).find("user_embedding"), std::string::npos) << e.what();
  }
}

TEST(Checkpoint, ConfigHashMismatchIsRejected) {
  TempDir dir("dcn_ckpt_hash");
  save_checkpoint(random_params(ModelConfig{7, 9, 4, 3}, 1), "", dir.path() / "m.ckpt");
  auto other = random_params(ModelConfig{7, 9, 4, 3, Backbone::kGru, StaticTowerInput::kHidden}, 1);
  try {
    load_into(dir.path() / "m.ckpt", other);
    FAIL();
  } catch (const ArtifactError& e) {
    EXPECT_NE(std::string(e.what()).find("hash"), std::string::npos) << e.what();
  }
}

TEST(Checkpoint, TruncatedCorruptOrMissingFilesAreRejected) {
  TempDir dir("dcn_ckpt_bad");
  save_checkpoint(random_params(ModelConfig{7, 9, 4, 3}, 1), "", dir.path() / "m.ckpt");
  const std::string bytes = file_bytes(dir.path() / "m.ckpt");
  for (std::size_t keep : {std::size_t{0}, std::size_t{5}, std::size_t{40}, bytes.size() / 2, bytes.size() - 1}) {
    std::ofstream(dir.path() / "t.ckpt", std::ios::binary) << bytes.substr(0, keep);
    EXPECT_THROW(load_checkpoint(dir.path() / "t.ckpt"), ArtifactError) << keep;
  }
  std::ofstream(dir.path() / "x.ckpt", std::ios::binary) << bytes << 'x';
  EXPECT_THROW(load_checkpoint(dir.path() / "x.ckpt"), ArtifactError);
  std::string flipped = bytes;
  flipped[0] = 'X';
  std::ofstream(dir.path() / "f.ckpt", std::ios::binary) << flipped;
  EXPECT_THROW(load_checkpoint(dir.path() / "f.ckpt"), ArtifactError);
  EXPECT_THROW(load_checkpoint(dir.path() / "missing.ckpt"), ArtifactError);
}

TEST(TrainConfig, ValidationRejectsBadValues) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), InputError);
  c = TrainConfig{};
  c.lambda_repr = -1.0;
  EXPECT_THROW(c.validate(), InputError);
  c = TrainConfig{};
  c.lr = 0.0;
  EXPECT_THROW(c.validate(), InputError);
}

TEST(EpochSamples, PositivesFollowedByNegatives) {
  const auto& data = small_dataset();
  auto config = small_config();
  config.k_neg_train = 2;
  const auto samples = epoch_samples(config, data, 1);
  std::size_t positives = 0;
  std::size_t negatives_in_log = 0;
  for (const auto& e : data.splits.train) (e.label == 1 ? positives : negatives_in_log) += 1;
  EXPECT_EQ(samples.size(), 3 * positives + negatives_in_log);
  for (std::size_t k = 0; k + 2 < samples.size(); ++k) {
    if (samples[k].label != 1) continue;
    for (std::size_t j = 1; j <= 2; ++j) {
      EXPECT_EQ(samples[k + j].label, 0);
      EXPECT_EQ(samples[k + j].user, samples[k].user);
      EXPECT_FALSE(data.train.contains(samples[k].user, samples[k + j].item));
    }
    k += 2;
  }
  EXPECT_EQ(epoch_samples(config, data, 1), samples);
  EXPECT_NE(epoch_samples(config, data, 2), samples);
}

TEST(Train, DeterministicHistoryAndParameters) {
  const auto& data = small_dataset();
  const auto a = train(small_config(), data);
  const auto b = train(small_config(), data);
  EXPECT_EQ(history_csv(a.history), history_csv(b.history));
  const auto pa = a.params.all();
  const auto pb = b.params.all();
  for (std::size_t k = 0; k < pa.size(); ++k) EXPECT_EQ(pa[k]->value, pb[k]->value) << pa[k]->name;
}

TEST(Train, HistoryRecordsDecomposeAndCsvHasHeader) {
  const auto& data = small_dataset();
  std::size_t callbacks = 0;
  const auto result = train(small_config(), data, [&](const EpochRecord&) { ++callbacks; });
  ASSERT_FALSE(result.history.epochs.empty());
  EXPECT_EQ(callbacks, result.history.epochs.size());
  EXPECT_LE(result.history.epochs.size(), small_config().epochs_max);
  for (std::size_t k = 0; k < result.history.epochs.size(); ++k) {
    const auto& r = result.history.epochs[k];
    EXPECT_EQ(r.epoch, k + 1);
    EXPECT_NEAR(r.loss_total, r.loss_item + r.loss_repr + r.loss_interest + r.loss_reg, 1e-10);
    EXPECT_GE(r.val_auc, 0.0);
    EXPECT_LE(r.val_auc, 1.0);
  }
  EXPECT_EQ(history_csv(result.history).substr(0, 34), "epoch,L_i,L_e,L_p,L_total,val_auc\n");
}

// Trailing run of epochs that failed to beat the best earlier validation AUC.
std::size_t trailing_stale(const TrainHistory& h, std::size_t& longest_before) {
  double best = -1.0;
  std::size_t stale = 0;
  longest_before = 0;
  for (const auto& r : h.epochs) {
    if (r.val_auc > best) {
      best = r.val_auc;
      stale = 0;
    } else {
      ++stale;
    }
    if (&r != &h.epochs.back()) longest_before = std::max(longest_before, stale);
  }
  return stale;
}

TEST(Train, PatienceStoppingContract) {
  const auto& data = small_dataset();
  for (std::size_t patience : {0u, 1u}) {
    auto config = small_config();
    config.epochs_max = 12;
    config.lr = 0.05;
    config.patience = patience;
    const auto result = train(config, data);
    std::size_t longest_before = 0;
    const std::size_t stale = trailing_stale(result.history, longest_before);
    EXPECT_LE(longest_before, patience);
    if (result.history.epochs.size() < config.epochs_max) EXPECT_EQ(stale, patience + 1);
    const auto& best = result.history.epochs.at(result.history.best_epoch - 1);
    for (const auto& r : result.history.epochs) EXPECT_LE(r.val_auc, best.val_auc);
  }
}

TEST(Train, EmptyTrainSplitIsAnInputError) {
  const Dataset empty(SplitLogs{}, 3, 3);
  EXPECT_THROW(train(small_config(), empty), InputError);
}

TEST(Train, NonFiniteLossIsANumericError) {
  const auto& data = small_dataset();
  auto params = random_params(small_config().model_config(data.num_users, data.num_items), 1);
  params.next_item_tower.b3.value[0] = std::nan("");
  const auto handles = params.all();
  Adam adam(handles);
  const auto samples = epoch_samples(small_config(), data, 1);
  const std::vector<DualSample> batch(samples.begin(), samples.begin() + 4);
  EXPECT_THROW(train_step(params, adam, batch, small_config().loss_weights(), ForwardMode::kFull), NumericError);
}

TEST(Ablation, BothOffMatchesNextItemBaselineBitwise) {
  const auto& data = small_dataset();
  auto off = small_config();
  off.lambda_repr = 0.0;
  off.lambda_interest = 0.0;
  auto baseline = off;
  baseline.next_item_only = true;
  const auto a = train(off, data);
  const auto b = train(baseline, data);
  ASSERT_EQ(a.history.epochs.size(), b.history.epochs.size());
  for (std::size_t k = 0; k < a.history.epochs.size(); ++k) {
    EXPECT_EQ(a.history.epochs[k].loss_total, b.history.epochs[k].loss_total);
    EXPECT_EQ(a.history.epochs[k].loss_item, b.history.epochs[k].loss_item);
    EXPECT_EQ(a.history.epochs[k].val_auc, b.history.epochs[k].val_auc);
  }
  EXPECT_EQ(a.params.item_embedding.value, b.params.item_embedding.value);
}

TEST(Ablation, RepresentationOffLeavesTransformsAtInitialization) {
  const auto& data = small_dataset();
  auto config = small_config();
  config.lambda_repr = 0.0;
  const auto result = train(config, data);
  SeededRng init_rng(derive_seed(config.seed, "init"));
  const DcnParameters init(config.model_config(data.num_users, data.num_items), init_rng);
  EXPECT_EQ(result.params.item_to_user.w.value, init.item_to_user.w.value);
  EXPECT_EQ(result.params.user_to_item.w.value, init.user_to_item.w.value);
  EXPECT_EQ(result.params.user_to_item.b.value, init.user_to_item.b.value);
  EXPECT_NE(result.params.next_item_tower.w1.value, init.next_item_tower.w1.value);
}

TEST(Ablation, FourRowsAndSweepIdentity) {
  const auto& data = small_dataset();
  auto config = small_config();
  config.epochs_max = 2;
  const auto rows = ablate(config, data);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0].label, "DR=on,DI=on");
  EXPECT_EQ(rows[1].label, "DR=on,DI=off");
  EXPECT_EQ(rows[2].label, "DR=off,DI=on");
  EXPECT_EQ(rows[3].label, "DR=off,DI=off");
  EXPECT_EQ(rows[1].lambda_interest, 0.0);
  EXPECT_EQ(rows[2].lambda_repr, 0.0);
  EXPECT_EQ(rows[0].lambda_repr, config.lambda_repr);

  const std::vector<double> grid{0.0, config.lambda_repr};
  const auto sweep = sweep_lambda(config, data, grid);
  ASSERT_EQ(sweep.size(), 2u);
  EXPECT_EQ(sweep[0].user.to_json().dump(), rows[3].user.to_json().dump());
  EXPECT_EQ(sweep[0].item.to_json().dump(), rows[3].item.to_json().dump());
  EXPECT_EQ(sweep[1].user.to_json().dump(), rows[0].user.to_json().dump());
  EXPECT_EQ(history_csv(sweep[1].history), history_csv(rows[0].history));

  std::ostringstream csv;
  write_table_csv(csv, sweep);
  std::size_t lines = 0;
  for (char ch : csv.str()) lines += ch == '\n';
  EXPECT_EQ(lines, 3u);
  EXPECT_EQ(table_json(sweep).size(), 2u);
  const std::vector<double> bad{-1.0};
  EXPECT_THROW(sweep_lambda(config, data, bad), InputError);
}

TEST(Train, EvaluationNegativeCountDoesNotTouchTraining) {
  const auto& data = small_dataset();
  auto a = small_config();
  auto b = a;
  b.k_neg_eval = 19;
  const auto ra = train(a, data);
  const auto rb = train(b, data);
  const std::size_t common = std::min(ra.history.epochs.size(), rb.history.epochs.size());
  for (std::size_t k = 0; k < common; ++k)
    EXPECT_EQ(ra.history.epochs[k].loss_total, rb.history.epochs[k].loss_total);
}

}  // namespace
}  // namespace dcn
