#include "dcn/trainer.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include "dcn/errors.hpp"

namespace dcn {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void TrainConfig::validate() const {
  const auto require = [](bool ok, const std::string& what) {
    if (!ok) throw InputError("invalid training config: " + what);
  };
  require(embed_dim >= 1, "embed_dim must be >= 1");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(std::isfinite(lr) && lr > 0.0, "lr must be > 0");
  require(max_seq_len >= 1, "max_seq_len must be >= 1");
  require(epochs_max >= 1, "epochs_max must be >= 1");
  require(std::isfinite(lambda_repr) && lambda_repr >= 0.0, "lambda_e must be >= 0");
  require(std::isfinite(lambda_interest) && lambda_interest >= 0.0, "lambda_p must be >= 0");
  require(std::isfinite(lambda_embed) && lambda_embed >= 0.0, "lambda must be >= 0");
  require(k_neg_train >= 1, "k_neg_train must be >= 1");
  require(k_neg_eval >= 1, "k_neg_eval must be >= 1");
  require(top_k >= 1, "top_k must be >= 1");
}

ModelConfig TrainConfig::model_config(Id num_users, Id num_items) const {
  return ModelConfig{num_users, num_items, embed_dim, max_seq_len, backbone, static_tower_input};
}

LossWeights TrainConfig::loss_weights() const {
  return LossWeights{lambda_repr, lambda_interest, lambda_embed, aux_on_negatives};
}

Dataset::Dataset(SplitLogs s, Id users, Id items) : splits(std::move(s)), num_users(users), num_items(items) {
  std::vector<Interaction> all;
  all.reserve(splits.train.size() + splits.valid.size() + splits.test.size());
  for (const auto* part : {&splits.train, &splits.valid, &splits.test}) all.insert(all.end(), part->begin(), part->end());
  index = HistoryIndex(num_users, num_items, all);
  train = InteractionSets(num_users, num_items, splits.train);
}

Dataset Dataset::from_prepared(const PreparedData& data) { return Dataset(data.splits, data.num_users, data.num_items); }

void TrainHistory::write_csv(std::ostream& out) const {
  out << "epoch,L_i,L_e,L_p,L_total,val_auc\n" << std::setprecision(17);
  for (const auto& r : epochs)
    out << r.epoch << ',' << r.loss_item << ',' << r.loss_repr << ',' << r.loss_interest << ',' << r.loss_total
        << ',' << r.val_auc << '\n';
}

LossValues train_step(DcnParameters& params, Adam& adam, std::span<const DualSample> batch,
                      const LossWeights& weights, ForwardMode mode) {
  params.zero_grad();
  Tape tape;
  const ForwardOutputs out = forward(tape, params, batch, weights, mode);
  const LossValues values = loss_values(tape, out);
  if (!std::isfinite(values.total)) {
    std::ostringstream msg;
    msg << "non-finite loss (L_i=" << values.item << ", L_e=" << values.repr << ", L_p=" << values.interest
        << ", reg=" << values.reg << ")";
    throw NumericError(msg.str());
  }
  tape.backward(out.loss_total);
  adam.step();
  return values;
}

std::vector<DualSample> epoch_samples(const TrainConfig& config, const Dataset& data, std::size_t epoch) {
  std::vector<DualSample> samples;
  samples.reserve(data.splits.train.size() * (1 + config.k_neg_train));
  std::uint64_t ordinal = 0;
  for (const auto& e : data.splits.train) {
    DualSample sample = make_dual_sample(data.index, e.user, e.item, e.timestamp, config.max_seq_len, e.label);
    if (e.label == 0) {
      samples.push_back(std::move(sample));
      continue;
    }
    SeededRng rng(derive_seed(config.seed, "neg-train", epoch, ordinal++));
    std::vector<DualSample> negatives;
    try {
      negatives = sample_negatives(sample, data.index, data.train, NegativeMode::kItem, config.k_neg_train, rng);
    } catch (const SamplingError&) {
      // The user has met every item; the positive still trains.
    }
    samples.push_back(std::move(sample));
    for (auto& n : negatives) samples.push_back(std::move(n));
  }
  return samples;
}

namespace {

bool has_positive(std::span<const Interaction> events) {
  for (const auto& e : events)
    if (e.label == 1) return true;
  return false;
}

}  // namespace

TrainResult train(const TrainConfig& config, const Dataset& data, const EpochCallback& on_epoch) {
  config.validate();
  if (!has_positive(data.splits.train)) throw InputError("train split has no positive interactions");

  SeededRng init_rng(derive_seed(config.seed, "init"));
  DcnParameters params(config.model_config(data.num_users, data.num_items), init_rng);
  TrainResult result;
  result.init_rng_state = init_rng.state();
  const auto handles = params.all();
  Adam adam(handles, AdamConfig{.lr = config.lr});
  const LossWeights weights = config.loss_weights();
  const ForwardMode mode = config.next_item_only ? ForwardMode::kNextItemOnly : ForwardMode::kFull;
  const bool validate = has_positive(data.splits.valid);
  const EvalOptions val_options{config.k_neg_eval, config.top_k, derive_seed(config.seed, "valid")};

  double best_auc = -std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  result.params = params;
  for (std::size_t epoch = 1; epoch <= config.epochs_max; ++epoch) {
    const std::vector<DualSample> samples = epoch_samples(config, data, epoch);
    SeededRng shuffle_rng(derive_seed(config.seed, "shuffle", epoch));
    const auto batches = make_batches(samples.size(), config.batch_size, shuffle_rng, true);

    EpochRecord record;
    record.epoch = epoch;
    std::vector<DualSample> batch;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      batch.clear();
      for (std::size_t k : batches[b]) batch.push_back(samples[k]);
      LossValues v;
      try {
        v = train_step(params, adam, batch, weights, mode);
      } catch (const NumericError& err) {
        throw NumericError("epoch " + std::to_string(epoch) + ", batch " + std::to_string(b) + ": " + err.what());
      }
      const double w = static_cast<double>(batch.size()) / static_cast<double>(samples.size());
      record.loss_item += w * v.item;
      record.loss_repr += w * v.repr;
      record.loss_interest += w * v.interest;
      record.loss_reg += w * v.reg;
      record.loss_total += w * v.total;
    }

    bool improved = true;
    if (validate) {
      record.val_auc = evaluate(params, data.splits.valid, data.index, data.train, Centricity::kUser, val_options).auc;
      improved = record.val_auc > best_auc;
    } else {
      record.val_auc = std::numeric_limits<double>::quiet_NaN();
    }
    result.history.epochs.push_back(record);
    if (on_epoch) on_epoch(record);
    if (improved) {
      best_auc = validate ? record.val_auc : best_auc;
      result.params = params;
      result.history.best_epoch = epoch;
      stale = 0;
    } else if (++stale > config.patience) {
      break;
    }
  }
  return result;
}

RunReport train_and_test(const TrainConfig& config, const Dataset& data, std::string label) {
  RunReport row;
  row.label = std::move(label);
  row.lambda_repr = config.lambda_repr;
  row.lambda_interest = config.lambda_interest;
  row.seed = config.seed;
  TrainResult result = train(config, data);
  const EvalOptions options{config.k_neg_eval, config.top_k, config.seed};
  row.user = evaluate(result.params, data.splits.test, data.index, data.train, Centricity::kUser, options);
  row.item = evaluate(result.params, data.splits.test, data.index, data.train, Centricity::kItem, options);
  row.history = std::move(result.history);
  return row;
}

std::vector<RunReport> ablate(const TrainConfig& config, const Dataset& data) {
  std::vector<RunReport> rows;
  for (bool use_dr : {true, false}) {
    for (bool use_di : {true, false}) {
      TrainConfig c = config;
      if (!use_dr) c.lambda_repr = 0.0;
      if (!use_di) c.lambda_interest = 0.0;
      rows.push_back(train_and_test(c, data, std::string("DR=") + (use_dr ? "on" : "off") + ",DI=" +
                                                 (use_di ? "on" : "off")));
    }
  }
  return rows;
}

std::vector<RunReport> sweep_lambda(const TrainConfig& config, const Dataset& data, std::span<const double> grid) {
  std::vector<RunReport> rows;
  for (double v : grid) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw InputError("sweep grid values must be finite and >= 0");
    TrainConfig c = config;
    c.lambda_repr = v;
    c.lambda_interest = v;
    std::ostringstream label;
    label << "lambda_cl=" << std::setprecision(17) << v;
    rows.push_back(train_and_test(c, data, label.str()));
  }
  return rows;
}

void write_table_csv(std::ostream& out, std::span<const RunReport> rows) {
  out << "label,lambda_e,lambda_p,seed,best_epoch,epochs,user_auc,user_gauc,user_mrr,user_ndcg,"
         "item_auc,item_gauc,item_mrr,item_ndcg\n"
      << std::setprecision(17);
  for (const auto& r : rows)
    out << '"' << r.label << "\"," << r.lambda_repr << ',' << r.lambda_interest << ',' << r.seed << ','
        << r.history.best_epoch << ',' << r.history.epochs.size() << ',' << r.user.auc << ',' << r.user.gauc << ','
        << r.user.mrr << ',' << r.user.ndcg << ',' << r.item.auc << ',' << r.item.gauc << ',' << r.item.mrr << ','
        << r.item.ndcg << '\n';
}

nlohmann::ordered_json table_json(std::span<const RunReport> rows) {
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    nlohmann::ordered_json j;
    j["label"] = r.label;
    j["lambda_e"] = r.lambda_repr;
    j["lambda_p"] = r.lambda_interest;
    j["seed"] = r.seed;
    j["best_epoch"] = r.history.best_epoch;
    j["epochs"] = r.history.epochs.size();
    j["user"] = r.user.to_json();
    j["item"] = r.item.to_json();
    out.push_back(std::move(j));
  }
  return out;
}

namespace {

constexpr char kMagic[8] = {'D', 'C', 'N', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  template <typename T>
  void pod(T v) {
    char bytes[sizeof(T)];
    std::memcpy(bytes, &v, sizeof(T));
    buf_.append(bytes, sizeof(T));
  }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    buf_ += s;
  }
  void raw(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(std::string bytes, std::string origin) : buf_(std::move(bytes)), origin_(std::move(origin)) {}

  template <typename T>
  T pod() {
    T v;
    std::memcpy(&v, take(sizeof(T)), sizeof(T));
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint64_t>();
    return std::string(take(n), n);
  }
  const char* take(std::size_t n) {
    if (n > buf_.size() - pos_) throw ArtifactError("checkpoint " + origin_ + " is truncated");
    const char* p = buf_.data() + pos_;
    pos_ += n;
    return p;
  }
  bool done() const { return pos_ == buf_.size(); }

 private:
  std::string buf_;
  std::string origin_;
  std::size_t pos_ = 0;
};

struct StoredTensor {
  std::string name;
  Tensor value;
};

struct StoredCheckpoint {
  ModelConfig config;
  std::uint64_t hash = 0;
  std::string rng_state;
  std::vector<StoredTensor> tensors;
};

StoredCheckpoint read_stored(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArtifactError("cannot open checkpoint " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(std::move(bytes), path.string());
  if (std::memcmp(r.take(sizeof(kMagic)), kMagic, sizeof(kMagic)) != 0)
    throw ArtifactError(path.string() + " is not a checkpoint (bad magic)");
  const auto version = r.pod<std::uint32_t>();
  if (version != kVersion)
    throw ArtifactError("checkpoint " + path.string() + " has unsupported version " + std::to_string(version));

  StoredCheckpoint ck;
  ck.config.num_users = r.pod<std::uint32_t>();
  ck.config.num_items = r.pod<std::uint32_t>();
  ck.config.embed_dim = r.pod<std::uint64_t>();
  ck.config.max_seq_len = r.pod<std::uint64_t>();
  const auto backbone = r.pod<std::uint8_t>();
  const auto static_input = r.pod<std::uint8_t>();
  if (backbone > 1 || static_input > 1) throw ArtifactError("checkpoint " + path.string() + " has a corrupt config");
  ck.config.backbone = static_cast<Backbone>(backbone);
  ck.config.static_tower_input = static_cast<StaticTowerInput>(static_input);
  ck.hash = r.pod<std::uint64_t>();
  const std::string canonical = r.str();
  if (canonical != ck.config.canonical() || ck.hash != ck.config.hash())
    throw ArtifactError("checkpoint " + path.string() + " has a corrupt config hash");
  ck.rng_state = r.str();

  const auto count = r.pod<std::uint64_t>();
  for (std::uint64_t t = 0; t < count; ++t) {
    StoredTensor st;
    st.name = r.str();
    const auto rank = r.pod<std::uint32_t>();
    if (rank == 0 || rank > 2) throw ArtifactError("checkpoint tensor " + st.name + " has invalid rank");
    Shape shape(rank);
    for (auto& extent : shape) {
      extent = r.pod<std::uint64_t>();
      if (extent == 0 || extent > (std::uint64_t{1} << 32))
        throw ArtifactError("checkpoint tensor " + st.name + " has invalid extent");
    }
    std::vector<double> values(shape_size(shape));
    std::memcpy(values.data(), r.take(values.size() * sizeof(double)), values.size() * sizeof(double));
    st.value = Tensor(std::move(shape), std::move(values));
    ck.tensors.push_back(std::move(st));
  }
  if (!r.done()) throw ArtifactError("checkpoint " + path.string() + " has trailing bytes");
  return ck;
}

void assign(const StoredCheckpoint& ck, DcnParameters& params) {
  const auto targets = params.all();
  std::map<std::string, const Tensor*> by_name;
  for (const auto& st : ck.tensors) by_name[st.name] = &st.value;
  for (Parameter* p : targets) {
    const auto it = by_name.find(p->name);
    if (it == by_name.end()) throw ArtifactError("checkpoint lacks tensor " + p->name);
    if (it->second->shape() != p->value.shape())
      throw ArtifactError("tensor " + p->name + ": checkpoint shape " + shape_string(it->second->shape()) +
                          " does not match model shape " + shape_string(p->value.shape()));
  }
  if (by_name.size() != targets.size()) throw ArtifactError("checkpoint holds tensors the model does not have");
  if (ck.hash != params.config.hash())
    throw ArtifactError("checkpoint config hash mismatch: checkpoint {" + ck.config.canonical() + "} vs model {" +
                        params.config.canonical() + "}");
  for (Parameter* p : targets) {
    p->value = *by_name.at(p->name);
    p->zero_grad();
  }
}

}  // namespace

void save_checkpoint(const DcnParameters& params, const std::string& rng_state, const std::filesystem::path& path) {
  Writer w;
  w.raw(kMagic, sizeof(kMagic));
  w.pod<std::uint32_t>(kVersion);
  const ModelConfig& c = params.config;
  w.pod<std::uint32_t>(c.num_users);
  w.pod<std::uint32_t>(c.num_items);
  w.pod<std::uint64_t>(c.embed_dim);
  w.pod<std::uint64_t>(c.max_seq_len);
  w.pod<std::uint8_t>(static_cast<std::uint8_t>(c.backbone));
  w.pod<std::uint8_t>(static_cast<std::uint8_t>(c.static_tower_input));
  w.pod<std::uint64_t>(c.hash());
  w.str(c.canonical());
  w.str(rng_state);
  const auto tensors = params.all();
  w.pod<std::uint64_t>(tensors.size());
  for (const Parameter* p : tensors) {
    w.str(p->name);
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(p->value.rank()));
    for (std::size_t extent : p->value.shape()) w.pod<std::uint64_t>(extent);
    w.raw(p->value.data(), p->value.size() * sizeof(double));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ArtifactError("cannot write checkpoint " + path.string());
  out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
  if (!out) throw ArtifactError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const StoredCheckpoint stored = read_stored(path);
  Checkpoint ck;
  SeededRng placeholder(0);
  ck.params = DcnParameters(stored.config, placeholder);
  assign(stored, ck.params);
  ck.rng_state = stored.rng_state;
  return ck;
}

std::string load_into(const std::filesystem::path& path, DcnParameters& params) {
  const StoredCheckpoint stored = read_stored(path);
  assign(stored, params);
  return stored.rng_state;
}

}  // namespace dcn
