#include "dcn/model.hpp"

#include <cmath>
#include <stdexcept>

#include "dcn/errors.hpp"
#include "dcn/optim.hpp"

namespace dcn {

std::string to_string(Backbone b) { return b == Backbone::kGru ? "gru" : "attention"; }

std::string to_string(StaticTowerInput s) { return s == StaticTowerInput::kEmbeddings ? "embeddings" : "hidden"; }

Backbone parse_backbone(std::string_view s) {
  if (s == "gru") return Backbone::kGru;
  if (s == "attention") return Backbone::kAttention;
  throw InputError("backbone must be 'gru' or 'attention', got '" + std::string(s) + "'");
}

StaticTowerInput parse_static_tower_input(std::string_view s) {
  if (s == "embeddings") return StaticTowerInput::kEmbeddings;
  if (s == "hidden") return StaticTowerInput::kHidden;
  throw InputError("static_tower_input must be 'embeddings' or 'hidden', got '" + std::string(s) + "'");
}

std::string ModelConfig::canonical() const {
  return "num_users=" + std::to_string(num_users) + ";num_items=" + std::to_string(num_items) +
         ";embed_dim=" + std::to_string(embed_dim) + ";max_seq_len=" + std::to_string(max_seq_len) +
         ";backbone=" + to_string(backbone) + ";static_tower_input=" + to_string(static_tower_input) +
         ";tower=" + std::to_string(kTowerHidden1) + "," + std::to_string(kTowerHidden2);
}

std::uint64_t ModelConfig::hash() const { return fnv1a64(canonical()); }

namespace {

Parameter matrix(const std::string& name, std::size_t rows, std::size_t cols, SeededRng& rng) {
  return Parameter(name, xavier_init({rows, cols}, rng));
}

Parameter bias(const std::string& name, std::size_t n) { return Parameter(name, Tensor({n}, 0.0)); }

EncoderWeights make_encoder(const std::string& prefix, const ModelConfig& c, SeededRng& rng) {
  const std::size_t d = c.embed_dim;
  if (c.backbone == Backbone::kGru) {
    GruWeights w;
    w.w_z = matrix(prefix + ".w_z", d, 2 * d, rng);
    w.w_r = matrix(prefix + ".w_r", d, 2 * d, rng);
    w.w_h = matrix(prefix + ".w_h", d, 2 * d, rng);
    return w;
  }
  AttentionWeights w;
  w.position = matrix(prefix + ".position", c.max_seq_len, d, rng);
  w.w_q = matrix(prefix + ".w_q", d, d, rng);
  w.w_k = matrix(prefix + ".w_k", d, d, rng);
  w.w_v = matrix(prefix + ".w_v", d, d, rng);
  w.w_ff1 = matrix(prefix + ".w_ff1", d, d, rng);
  w.b_ff1 = bias(prefix + ".b_ff1", d);
  w.w_ff2 = matrix(prefix + ".w_ff2", d, d, rng);
  w.b_ff2 = bias(prefix + ".b_ff2", d);
  return w;
}

TransformLayer make_transform(const std::string& prefix, std::size_t d, SeededRng& rng) {
  return TransformLayer{matrix(prefix + ".w", d, d, rng), bias(prefix + ".b", d)};
}

MlpTower make_tower(const std::string& prefix, std::size_t d, SeededRng& rng) {
  MlpTower t;
  t.w1 = matrix(prefix + ".w1", 2 * d, kTowerHidden1, rng);
  t.b1 = bias(prefix + ".b1", kTowerHidden1);
  t.w2 = matrix(prefix + ".w2", kTowerHidden1, kTowerHidden2, rng);
  t.b2 = bias(prefix + ".b2", kTowerHidden2);
  t.w3 = matrix(prefix + ".w3", kTowerHidden2, 1, rng);
  t.b3 = bias(prefix + ".b3", 1);
  return t;
}

Parameter embedding(const std::string& name, Id count, std::size_t d, SeededRng& rng) {
  Parameter p = matrix(name, std::size_t{count} + 1, d, rng);
  for (std::size_t j = 0; j < d; ++j) p.value[j] = 0.0;
  return p;
}

template <typename Self, typename Out>
void collect(Self& self, std::vector<Out>& out) {
  const auto push_encoder = [&out](auto& enc) {
    std::visit(
        [&out](auto& w) {
          using W = std::decay_t<decltype(w)>;
          if constexpr (std::is_same_v<W, GruWeights>) {
            out.insert(out.end(), {&w.w_z, &w.w_r, &w.w_h});
          } else {
            out.insert(out.end(), {&w.position, &w.w_q, &w.w_k, &w.w_v, &w.w_ff1, &w.b_ff1, &w.w_ff2, &w.b_ff2});
          }
        },
        enc);
  };
  const auto push_tower = [&out](auto& t) { out.insert(out.end(), {&t.w1, &t.b1, &t.w2, &t.b2, &t.w3, &t.b3}); };
  out.push_back(&self.user_embedding);
  out.push_back(&self.item_embedding);
  push_encoder(self.user_encoder);
  push_encoder(self.item_encoder);
  out.insert(out.end(), {&self.item_to_user.w, &self.item_to_user.b, &self.user_to_item.w, &self.user_to_item.b});
  push_tower(self.next_item_tower);
  push_tower(self.next_user_tower);
  push_tower(self.static_tower);
}

std::vector<double> uniform_weights(std::size_t n) { return std::vector<double>(n, 1.0 / static_cast<double>(n)); }

std::vector<double> scaled_row_weights(std::span<const double> row_weights, std::size_t rows, double lambda) {
  std::vector<double> w = row_weights.empty() ? uniform_weights(rows)
                                              : std::vector<double>(row_weights.begin(), row_weights.end());
  if (w.size() != rows)
    throw ShapeError("contrastive loss: " + std::to_string(w.size()) + " row weights for " + std::to_string(rows) +
                     " rows");
  for (double& x : w) x *= lambda;
  return w;
}

}  // namespace

DcnParameters::DcnParameters(const ModelConfig& c, SeededRng& rng) : config(c) {
  if (c.num_users == 0 || c.num_items == 0) throw std::invalid_argument("DcnParameters: empty user or item catalog");
  if (c.embed_dim == 0 || c.max_seq_len == 0)
    throw std::invalid_argument("DcnParameters: embed_dim and max_seq_len must be positive");
  const std::size_t d = c.embed_dim;
  user_embedding = embedding("user_embedding", c.num_users, d, rng);
  item_embedding = embedding("item_embedding", c.num_items, d, rng);
  user_encoder = make_encoder("user_encoder", c, rng);
  item_encoder = make_encoder("item_encoder", c, rng);
  item_to_user = make_transform("item_to_user", d, rng);
  user_to_item = make_transform("user_to_item", d, rng);
  next_item_tower = make_tower("next_item_tower", d, rng);
  next_user_tower = make_tower("next_user_tower", d, rng);
  static_tower = make_tower("static_tower", d, rng);
}

std::vector<Parameter*> DcnParameters::all() {
  std::vector<Parameter*> out;
  collect(*this, out);
  return out;
}

std::vector<const Parameter*> DcnParameters::all() const {
  std::vector<const Parameter*> out;
  collect(*this, out);
  return out;
}

void DcnParameters::zero_grad() {
  for (Parameter* p : all()) p->zero_grad();
}

GruVars bind(Tape& tape, GruWeights& w) {
  return {tape.parameter(w.w_z), tape.parameter(w.w_r), tape.parameter(w.w_h)};
}

AttentionVars bind(Tape& tape, AttentionWeights& w) {
  return {tape.parameter(w.position), tape.parameter(w.w_q), tape.parameter(w.w_k),   tape.parameter(w.w_v),
          tape.parameter(w.w_ff1),    tape.parameter(w.b_ff1), tape.parameter(w.w_ff2), tape.parameter(w.b_ff2)};
}

EncoderVars bind(Tape& tape, EncoderWeights& w) {
  return std::visit([&tape](auto& x) -> EncoderVars { return bind(tape, x); }, w);
}

TransformVars bind(Tape& tape, TransformLayer& w) { return {tape.parameter(w.w), tape.parameter(w.b)}; }

TowerVars bind(Tape& tape, MlpTower& w) {
  return {tape.parameter(w.w1), tape.parameter(w.b1), tape.parameter(w.w2),
          tape.parameter(w.b2), tape.parameter(w.w3), tape.parameter(w.b3)};
}

EncoderVars view(Tape& tape, const EncoderWeights& w) {
  return std::visit(
      [&tape](const auto& x) -> EncoderVars {
        using W = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<W, GruWeights>) {
          return GruVars{tape.view(x.w_z.value), tape.view(x.w_r.value), tape.view(x.w_h.value)};
        } else {
          return AttentionVars{tape.view(x.position.value), tape.view(x.w_q.value),   tape.view(x.w_k.value),
                               tape.view(x.w_v.value),      tape.view(x.w_ff1.value), tape.view(x.b_ff1.value),
                               tape.view(x.w_ff2.value),    tape.view(x.b_ff2.value)};
        }
      },
      w);
}

TowerVars view(Tape& tape, const MlpTower& w) {
  return {tape.view(w.w1.value), tape.view(w.b1.value), tape.view(w.w2.value),
          tape.view(w.b2.value), tape.view(w.w3.value), tape.view(w.b3.value)};
}

Var embed_lookup(Tape& tape, Var table, std::span<const Id> ids) {
  return ops::gather_rows(tape, table, ids, ops::PadRow::kFrozen);
}

std::vector<Var> embed_sequences(Tape& tape, Var table, std::span<const std::vector<Id>> sequences) {
  if (sequences.empty()) throw ShapeError("embed_sequences: empty batch");
  const std::size_t len = sequences.front().size();
  if (len == 0) throw ShapeError("embed_sequences: sequences must have at least one position");
  std::vector<Var> steps;
  steps.reserve(len);
  std::vector<Id> ids(sequences.size());
  for (std::size_t t = 0; t < len; ++t) {
    for (std::size_t b = 0; b < sequences.size(); ++b) {
      if (sequences[b].size() != len)
        throw ShapeError("embed_sequences: sequence " + std::to_string(b) + " has length " +
                         std::to_string(sequences[b].size()) + ", expected " + std::to_string(len));
      ids[b] = sequences[b][t];
    }
    steps.push_back(embed_lookup(tape, table, ids));
  }
  return steps;
}

Var gru_encode(Tape& tape, std::span<const Var> steps, const GruVars& w) {
  if (steps.empty()) throw ShapeError("gru_encode: no time steps");
  const Tensor& first = tape.value(steps.front());
  const std::size_t d = first.cols();
  const Shape gate_shape{d, 2 * d};
  for (Var gate : {w.w_z, w.w_r, w.w_h})
    if (tape.value(gate).shape() != gate_shape)
      throw ShapeError("gru_encode: gate weights " + shape_string(tape.value(gate).shape()) + " do not match inputs " +
                       shape_string(first.shape()) + ", expected " + shape_string(gate_shape));
  using ops::Transpose;
  Var h = tape.constant(Tensor({first.rows(), d}, 0.0));
  for (Var e : steps) {
    Var eh = ops::concat(tape, e, h, 1);
    Var z = ops::sigmoid(tape, ops::matmul(tape, eh, w.w_z, Transpose::kRight));
    Var r = ops::sigmoid(tape, ops::matmul(tape, eh, w.w_r, Transpose::kRight));
    Var erh = ops::concat(tape, e, ops::mul(tape, r, h), 1);
    Var candidate = ops::tanh(tape, ops::matmul(tape, erh, w.w_h, Transpose::kRight));
    Var keep = ops::add_scalar(tape, ops::scale(tape, z, -1.0), 1.0);
    h = ops::add(tape, ops::mul(tape, keep, h), ops::mul(tape, z, candidate));
  }
  return h;
}

Var attention_encode(Tape& tape, std::span<const Var> steps, std::span<const std::uint8_t> pad_mask,
                     const AttentionVars& w) {
  if (steps.empty()) throw ShapeError("attention_encode: no time steps");
  const std::size_t len = steps.size();
  const std::size_t rows = tape.value(steps.front()).rows();
  const std::size_t d = tape.value(steps.front()).cols();
  if (tape.value(w.position).shape() != Shape{len, d})
    throw ShapeError("attention_encode: position table " + shape_string(tape.value(w.position).shape()) +
                     " does not match " + std::to_string(len) + " steps of width " + std::to_string(d));
  if (pad_mask.size() != rows * len)
    throw ShapeError("attention_encode: pad mask has " + std::to_string(pad_mask.size()) + " entries, expected " +
                     std::to_string(rows * len));

  std::vector<Var> x(len);
  std::vector<Id> pos_ids(rows);
  for (std::size_t t = 0; t < len; ++t) {
    std::fill(pos_ids.begin(), pos_ids.end(), static_cast<Id>(t));
    x[t] = ops::add(tape, steps[t], ops::gather_rows(tape, w.position, pos_ids, ops::PadRow::kTrainable));
  }
  const Var query = ops::matmul(tape, x[len - 1], w.w_q);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<Var> values(len);
  Var logits{};
  for (std::size_t t = 0; t < len; ++t) {
    Var key = ops::matmul(tape, x[t], w.w_k);
    values[t] = ops::matmul(tape, x[t], w.w_v);
    Var logit = ops::scale(tape, ops::row_dot(tape, query, key), inv_sqrt_d);
    logits = t == 0 ? logit : ops::concat(tape, logits, logit, 1);
  }
  Var attn = ops::masked_softmax(tape, logits, std::vector<std::uint8_t>(pad_mask.begin(), pad_mask.end()));
  Var mixed = ops::scale_rows(tape, values[0], ops::column(tape, attn, 0));
  for (std::size_t t = 1; t < len; ++t)
    mixed = ops::add(tape, mixed, ops::scale_rows(tape, values[t], ops::column(tape, attn, t)));
  Var residual = ops::add(tape, x[len - 1], mixed);
  Var hidden = ops::relu(tape, ops::add_bias(tape, ops::matmul(tape, residual, w.w_ff1), w.b_ff1));
  Var ff = ops::add_bias(tape, ops::matmul(tape, hidden, w.w_ff2), w.b_ff2);
  return ops::add(tape, residual, ff);
}

Var encode(Tape& tape, const EncoderVars& w, Var table, std::span<const std::vector<Id>> sequences) {
  std::vector<Var> steps = embed_sequences(tape, table, sequences);
  if (const auto* gru = std::get_if<GruVars>(&w)) return gru_encode(tape, steps, *gru);
  std::vector<std::uint8_t> mask;
  mask.reserve(sequences.size() * steps.size());
  for (const auto& s : sequences)
    for (Id id : s) mask.push_back(id != 0 ? 1 : 0);
  return attention_encode(tape, steps, mask, std::get<AttentionVars>(w));
}

Var transform(Tape& tape, Var h, const TransformVars& layer) {
  return ops::add_bias(tape, ops::matmul(tape, h, layer.w), layer.b);
}

Var predict_tower(Tape& tape, const TowerVars& tower, Var left, Var right) {
  Var x = ops::concat(tape, left, right, 1);
  Var h1 = ops::relu(tape, ops::add_bias(tape, ops::matmul(tape, x, tower.w1), tower.b1));
  Var h2 = ops::relu(tape, ops::add_bias(tape, ops::matmul(tape, h1, tower.w2), tower.b2));
  return ops::sigmoid(tape, ops::add_bias(tape, ops::matmul(tape, h2, tower.w3), tower.b3));
}

Var representation_contrastive_loss(Tape& tape, Var u, Var m_user, Var v, Var m_item, double lambda_e,
                                    std::span<const double> row_weights) {
  if (lambda_e < 0.0) throw std::invalid_argument("representation_contrastive_loss: lambda_e must be >= 0");
  Var dist = ops::add(tape, ops::row_squared_distance(tape, u, m_user), ops::row_squared_distance(tape, v, m_item));
  return ops::weighted_sum(tape, dist, scaled_row_weights(row_weights, tape.value(dist).rows(), lambda_e));
}

Var interest_contrastive_loss(Tape& tape, Var p_item, Var p_static, Var p_user, double lambda_p,
                              std::span<const double> row_weights) {
  if (lambda_p < 0.0) throw std::invalid_argument("interest_contrastive_loss: lambda_p must be >= 0");
  for (Var p : {p_item, p_static, p_user})
    for (double x : tape.value(p).values())
      if (x < 0.0 || x > 1.0)
        throw std::domain_error("interest_contrastive_loss: probability " + std::to_string(x) + " outside [0,1]");
  Var dist = ops::add(tape, ops::row_squared_distance(tape, p_item, p_static),
                      ops::row_squared_distance(tape, p_item, p_user));
  return ops::weighted_sum(tape, dist, scaled_row_weights(row_weights, tape.value(dist).rows(), lambda_p));
}

LossValues loss_values(const Tape& tape, const ForwardOutputs& out) {
  return {tape.value(out.loss_item).item(), tape.value(out.loss_repr).item(), tape.value(out.loss_interest).item(),
          tape.value(out.loss_reg).item(), tape.value(out.loss_total).item()};
}

ForwardOutputs forward(Tape& tape, DcnParameters& params, std::span<const DualSample> batch,
                       const LossWeights& weights, ForwardMode mode) {
  if (batch.empty()) throw std::invalid_argument("forward: empty batch");
  if (weights.lambda_repr < 0.0 || weights.lambda_interest < 0.0 || weights.lambda_embed < 0.0)
    throw std::invalid_argument("forward: loss weights must be non-negative");
  const std::size_t n = batch.size();
  std::vector<Id> users(n);
  std::vector<Id> items(n);
  std::vector<int> labels(n);
  std::vector<std::vector<Id>> item_seqs(n);
  std::vector<std::vector<Id>> user_seqs(n);
  for (std::size_t b = 0; b < n; ++b) {
    users[b] = batch[b].user;
    items[b] = batch[b].item;
    labels[b] = batch[b].label;
    item_seqs[b] = batch[b].item_seq;
    user_seqs[b] = batch[b].user_seq;
  }

  Var user_table = tape.parameter(params.user_embedding);
  Var item_table = tape.parameter(params.item_embedding);
  ForwardOutputs out;
  const Var m_item = embed_lookup(tape, item_table, items);
  out.h_item = encode(tape, bind(tape, params.item_encoder), item_table, item_seqs);
  out.p_item = predict_tower(tape, bind(tape, params.next_item_tower), out.h_item, m_item);
  out.loss_item = ops::logloss(tape, out.p_item, labels, kLogLossClamp);

  Var penalty = ops::add(tape, ops::sum_squares(tape, user_table), ops::sum_squares(tape, item_table));
  out.loss_reg = ops::scale(tape, penalty, weights.lambda_embed);

  if (mode == ForwardMode::kNextItemOnly) {
    out.loss_repr = tape.constant(Tensor::scalar(0.0));
    out.loss_interest = tape.constant(Tensor::scalar(0.0));
    out.loss_total = ops::add(tape, out.loss_item, out.loss_reg);
    return out;
  }

  std::vector<double> row_weights;
  if (!weights.aux_on_negatives) {
    std::size_t positives = 0;
    for (int y : labels) positives += y == 1;
    row_weights.assign(n, 0.0);
    for (std::size_t b = 0; b < n; ++b)
      if (labels[b] == 1) row_weights[b] = 1.0 / static_cast<double>(positives);
  }

  const Var m_user = embed_lookup(tape, user_table, users);
  out.h_user = encode(tape, bind(tape, params.user_encoder), user_table, user_seqs);
  out.p_user = predict_tower(tape, bind(tape, params.next_user_tower), *out.h_user, m_user);
  out.p_static = params.config.static_tower_input == StaticTowerInput::kEmbeddings
                     ? predict_tower(tape, bind(tape, params.static_tower), m_user, m_item)
                     : predict_tower(tape, bind(tape, params.static_tower), *out.h_user, out.h_item);

  const Var u_repr = transform(tape, out.h_item, bind(tape, params.item_to_user));
  const Var v_repr = transform(tape, *out.h_user, bind(tape, params.user_to_item));
  out.loss_repr = representation_contrastive_loss(tape, u_repr, m_user, v_repr, m_item, weights.lambda_repr,
                                                  row_weights);
  out.loss_interest = interest_contrastive_loss(tape, out.p_item, *out.p_static, *out.p_user,
                                                weights.lambda_interest, row_weights);
  out.loss_total = ops::add(tape, ops::add(tape, ops::add(tape, out.loss_item, out.loss_repr), out.loss_interest),
                            out.loss_reg);
  return out;
}

namespace {

std::vector<double> score_with(const EncoderWeights& encoder, const MlpTower& tower, const Parameter& seq_table,
                               const Parameter& candidate_table, std::span<const Id> seq,
                               std::span<const Id> candidates) {
  if (candidates.empty()) return {};
  Tape tape;
  const Var seq_var = tape.view(seq_table.value);
  const Var cand_var = tape.view(candidate_table.value);
  const std::vector<std::vector<Id>> seqs{std::vector<Id>(seq.begin(), seq.end())};
  const Var h = encode(tape, view(tape, encoder), seq_var, seqs);
  const std::vector<Id> repeat(candidates.size(), 0);
  const Var h_rep = ops::gather_rows(tape, h, repeat, ops::PadRow::kTrainable);
  const Var m = embed_lookup(tape, cand_var, candidates);
  const Tensor& p = tape.value(predict_tower(tape, view(tape, tower), h_rep, m));
  return {p.values().begin(), p.values().end()};
}

}  // namespace

std::vector<double> score_next_item(const DcnParameters& params, std::span<const Id> item_seq,
                                    std::span<const Id> candidate_items) {
  return score_with(params.item_encoder, params.next_item_tower, params.item_embedding, params.item_embedding,
                    item_seq, candidate_items);
}

std::vector<double> score_next_user(const DcnParameters& params, std::span<const Id> user_seq,
                                    std::span<const Id> candidate_users) {
  return score_with(params.user_encoder, params.next_user_tower, params.user_embedding, params.user_embedding,
                    user_seq, candidate_users);
}

}  // namespace dcn
