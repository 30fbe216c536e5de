#include "dcn/tape.hpp"

#include <array>
#include <stdexcept>
#include <utility>

#include "dcn/errors.hpp"

namespace dcn {

namespace {

constexpr std::array<std::pair<OpKind, std::string_view>, 24> kOpNames{{
    {OpKind::kLeaf, "leaf"},
    {OpKind::kConstant, "constant"},
    {OpKind::kSigmoid, "sigmoid"},
    {OpKind::kTanh, "tanh"},
    {OpKind::kRelu, "relu"},
    {OpKind::kAdd, "add"},
    {OpKind::kSub, "sub"},
    {OpKind::kMul, "mul"},
    {OpKind::kScale, "scale"},
    {OpKind::kAddScalar, "add_scalar"},
    {OpKind::kMatmul, "matmul"},
    {OpKind::kAddBias, "add_bias"},
    {OpKind::kConcat, "concat"},
    {OpKind::kGather, "gather_rows"},
    {OpKind::kSquaredL2, "squared_l2"},
    {OpKind::kRowSquaredDistance, "row_squared_distance"},
    {OpKind::kSum, "sum"},
    {OpKind::kWeightedSum, "weighted_sum"},
    {OpKind::kSumSquares, "sum_squares"},
    {OpKind::kLogLoss, "logloss"},
    {OpKind::kRowDot, "row_dot"},
    {OpKind::kColumn, "column"},
    {OpKind::kScaleRows, "scale_rows"},
    {OpKind::kMaskedSoftmax, "masked_softmax"},
}};

}  // namespace

std::string_view op_name(OpKind kind) {
  for (const auto& [k, name] : kOpNames)
    if (k == kind) return name;
  return "unknown";
}

std::optional<OpKind> op_from_name(std::string_view name) {
  for (const auto& [k, n] : kOpNames)
    if (n == name) return k;
  return std::nullopt;
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{OpKind::kConstant, std::move(value), nullptr, nullptr, {}, {}});
  return Var{nodes_.size() - 1};
}

Var Tape::view(const Tensor& value) {
  nodes_.push_back(Node{OpKind::kConstant, {}, &value, nullptr, {}, {}});
  return Var{nodes_.size() - 1};
}

Var Tape::parameter(Parameter& param) {
  nodes_.push_back(Node{OpKind::kLeaf, {}, &param.value, &param, {}, {}});
  return Var{nodes_.size() - 1};
}

Var Tape::record(OpKind kind, Tensor value, BackwardFn backward) {
  nodes_.push_back(Node{kind, std::move(value), nullptr, nullptr, {}, std::move(backward)});
  return Var{nodes_.size() - 1};
}

const Tensor& Tape::value(Var v) const { return value(v.index); }

const Tensor& Tape::value(std::size_t index) const {
  if (index >= nodes_.size())
    throw std::out_of_range("tape handle " + std::to_string(index) + " not on this tape");
  const Node& node = nodes_[index];
  return node.ref ? *node.ref : node.value;
}

Tensor& Tape::grad_buffer(std::size_t index) {
  Node& node = nodes_.at(index);
  if (node.grad.empty()) node.grad = Tensor(value(index).shape(), 0.0);
  return node.grad;
}

void Tape::backward(Var loss) {
  if (loss.index >= nodes_.size())
    throw std::invalid_argument("backward: loss handle is not on this tape (incomplete tape)");
  if (value(loss).size() != 1)
    throw ShapeError("backward: loss must be scalar, got shape " + shape_string(value(loss).shape()));
  if (backward_done_) throw std::logic_error("backward: tape already replayed");
  backward_done_ = true;

  grad_buffer(loss.index)[0] = 1.0;
  for (std::size_t i = loss.index + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (node.grad.empty()) continue;
    if (fault_ && node.kind == fault_->kind)
      for (double& g : node.grad.values()) g *= fault_->factor;
    if (node.backward) node.backward(*this, i);
  }
  for (Node& node : nodes_) {
    if (!node.param || node.grad.empty()) continue;
    auto dst = node.param->grad.values();
    auto src = node.grad.values();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
  }
}

}  // namespace dcn
