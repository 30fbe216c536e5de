#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "dcn/data.hpp"
#include "dcn/ops.hpp"
#include "dcn/rng.hpp"
#include "dcn/tape.hpp"
#include "dcn/tensor.hpp"

namespace dcn {

inline constexpr std::size_t kTowerHidden1 = 100;
inline constexpr std::size_t kTowerHidden2 = 64;

enum class Backbone { kGru, kAttention };
// Inputs of the static-interest tower: target embeddings, or the two encoder outputs.
enum class StaticTowerInput { kEmbeddings, kHidden };

std::string to_string(Backbone b);
std::string to_string(StaticTowerInput s);
Backbone parse_backbone(std::string_view s);
StaticTowerInput parse_static_tower_input(std::string_view s);

// Everything that fixes tensor shapes. Its hash guards checkpoints.
struct ModelConfig {
  Id num_users = 0;
  Id num_items = 0;
  std::size_t embed_dim = 32;
  std::size_t max_seq_len = 20;
  Backbone backbone = Backbone::kGru;
  StaticTowerInput static_tower_input = StaticTowerInput::kEmbeddings;

  std::string canonical() const;
  std::uint64_t hash() const;
};

struct LossWeights {
  double lambda_repr = 0.0;      // dual representation contrastive term
  double lambda_interest = 0.0;  // dual interest contrastive term
  double lambda_embed = 0.0;     // squared L2 penalty on both embedding tables
  bool aux_on_negatives = true;  // false: contrastive terms averaged over positives only
};

// Gate matrices act on [E_t, H_{t-1}], hence D x 2D. No biases.
struct GruWeights {
  Parameter w_z;
  Parameter w_r;
  Parameter w_h;
};

// Single-head, single-block self-attention read out at the last position.
struct AttentionWeights {
  Parameter position;  // T x D
  Parameter w_q;
  Parameter w_k;
  Parameter w_v;
  Parameter w_ff1;
  Parameter b_ff1;
  Parameter w_ff2;
  Parameter b_ff2;
};

using EncoderWeights = std::variant<GruWeights, AttentionWeights>;

// x W + b with W D x D.
struct TransformLayer {
  Parameter w;
  Parameter b;
};

// 2D -> 100 -> 64 -> 1, rectifier hidden units, sigmoid output.
struct MlpTower {
  Parameter w1;
  Parameter b1;
  Parameter w2;
  Parameter b2;
  Parameter w3;
  Parameter b3;
};

class DcnParameters {
 public:
  DcnParameters() = default;
  // Matrices get Xavier-uniform draws in all() order; biases start at zero;
  // embedding row 0 is the zero pad row.
  DcnParameters(const ModelConfig& config, SeededRng& rng);

  ModelConfig config;
  Parameter user_embedding;  // (num_users + 1) x D
  Parameter item_embedding;  // (num_items + 1) x D
  EncoderWeights user_encoder;
  EncoderWeights item_encoder;
  TransformLayer item_to_user;
  TransformLayer user_to_item;
  MlpTower next_item_tower;
  MlpTower next_user_tower;
  MlpTower static_tower;

  // Stable order; names are unique and used by checkpoints.
  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  void zero_grad();
};

// Tape bindings of the parameter groups.
struct GruVars {
  Var w_z, w_r, w_h;
};
struct AttentionVars {
  Var position, w_q, w_k, w_v, w_ff1, b_ff1, w_ff2, b_ff2;
};
using EncoderVars = std::variant<GruVars, AttentionVars>;
struct TransformVars {
  Var w, b;
};
struct TowerVars {
  Var w1, b1, w2, b2, w3, b3;
};

GruVars bind(Tape& tape, GruWeights& w);
AttentionVars bind(Tape& tape, AttentionWeights& w);
EncoderVars bind(Tape& tape, EncoderWeights& w);
TransformVars bind(Tape& tape, TransformLayer& w);
TowerVars bind(Tape& tape, MlpTower& w);
// Read-only bindings (no gradient flows to the parameters).
EncoderVars view(Tape& tape, const EncoderWeights& w);
TowerVars view(Tape& tape, const MlpTower& w);

// Row gather with the pad row frozen: ids[k] picks row ids[k] of the table.
Var embed_lookup(Tape& tape, Var table, std::span<const Id> ids);

// Embeds column t of every sequence: result[t] is [B x D].
std::vector<Var> embed_sequences(Tape& tape, Var table, std::span<const std::vector<Id>> sequences);

// GRU over steps (each [B x D]) from H_0 = 0; returns H_T, [B x D].
Var gru_encode(Tape& tape, std::span<const Var> steps, const GruVars& w);

// pad_mask is B x T, 1 for real events. Returns the last position's output, [B x D].
Var attention_encode(Tape& tape, std::span<const Var> steps, std::span<const std::uint8_t> pad_mask,
                     const AttentionVars& w);

Var encode(Tape& tape, const EncoderVars& w, Var table, std::span<const std::vector<Id>> sequences);

// h W + b, used for both item-sequence -> user and user-sequence -> item.
Var transform(Tape& tape, Var h, const TransformVars& layer);

// sigmoid(MLP(left || right)), [B x 1].
Var predict_tower(Tape& tape, const TowerVars& tower, Var left, Var right);

// lambda_e * weighted mean over rows of |U - M_u|^2 + |V - M_i|^2.
// row_weights must sum to 1 (empty means uniform).
Var representation_contrastive_loss(Tape& tape, Var u, Var m_user, Var v, Var m_item, double lambda_e,
                                    std::span<const double> row_weights = {});

// lambda_p * weighted mean of (p_item - p_static)^2 + (p_item - p_user)^2.
// Probabilities must lie in [0,1]; a saturated sigmoid can round to either end.
Var interest_contrastive_loss(Tape& tape, Var p_item, Var p_static, Var p_user, double lambda_p,
                              std::span<const double> row_weights = {});

inline constexpr double kLogLossClamp = 1e-12;

struct ForwardOutputs {
  Var p_item;
  std::optional<Var> p_user;
  std::optional<Var> p_static;
  Var loss_item;
  Var loss_repr;
  Var loss_interest;
  Var loss_reg;
  Var loss_total;
  std::optional<Var> h_user;
  Var h_item;
};

struct LossValues {
  double item = 0.0;
  double repr = 0.0;
  double interest = 0.0;
  double reg = 0.0;
  double total = 0.0;
};

LossValues loss_values(const Tape& tape, const ForwardOutputs& out);

// kFull runs the dual network. kNextItemOnly is the single-encoder baseline
// (item encoder + next-item tower + LogLoss + embedding penalty).
enum class ForwardMode { kFull, kNextItemOnly };

ForwardOutputs forward(Tape& tape, DcnParameters& params, std::span<const DualSample> batch,
                       const LossWeights& weights, ForwardMode mode = ForwardMode::kFull);

// Inference helpers: encode one sequence once and score candidates with a tower.
std::vector<double> score_next_item(const DcnParameters& params, std::span<const Id> item_seq,
                                    std::span<const Id> candidate_items);
std::vector<double> score_next_user(const DcnParameters& params, std::span<const Id> user_seq,
                                    std::span<const Id> candidate_users);

}  // namespace dcn
