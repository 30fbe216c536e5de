#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string_view>
#include <vector>

#include "dcn/tensor.hpp"

namespace dcn {

enum class OpKind {
  kLeaf,
  kConstant,
  kSigmoid,
  kTanh,
  kRelu,
  kAdd,
  kSub,
  kMul,
  kScale,
  kAddScalar,
  kMatmul,
  kAddBias,
  kConcat,
  kGather,
  kSquaredL2,
  kRowSquaredDistance,
  kSum,
  kWeightedSum,
  kSumSquares,
  kLogLoss,
  kRowDot,
  kColumn,
  kScaleRows,
  kMaskedSoftmax,
};

std::string_view op_name(OpKind kind);
std::optional<OpKind> op_from_name(std::string_view name);

// Handle to a tensor recorded on a Tape.
struct Var {
  std::size_t index = 0;
};

// Records op applications in execution order and replays their local
// backward rules in reverse. Confined to one thread.
class Tape {
 public:
  // Accumulates into grad_buffer() of the node's inputs; reads the node's own grad.
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Var constant(Tensor value);
  // Constant that refers to `value` without copying; `value` must outlive the tape.
  Var view(const Tensor& value);
  // The parameter must outlive the tape and stay unmodified until backward()
  // returns. Gradients are added into param.grad by backward().
  Var parameter(Parameter& param);
  Var record(OpKind kind, Tensor value, BackwardFn backward);

  const Tensor& value(Var v) const;
  const Tensor& value(std::size_t index) const;
  // Empty tensor when no gradient reached the node.
  const Tensor& grad(Var v) const { return nodes_.at(v.index).grad; }
  const Tensor& grad(std::size_t index) const { return nodes_.at(index).grad; }
  Tensor& grad_buffer(std::size_t index);

  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }
  OpKind kind(Var v) const { return nodes_.at(v.index).kind; }

  // Test hook: multiplies the upstream gradient of every `kind` node by `factor`
  // before its backward rule runs, simulating a broken rule for that op.
  void inject_fault(OpKind kind, double factor = 1.5) { fault_ = {kind, factor}; }

 private:
  struct Node {
    OpKind kind = OpKind::kConstant;
    Tensor value;
    const Tensor* ref = nullptr;
    Parameter* param = nullptr;
    Tensor grad;
    BackwardFn backward;
  };
  struct Fault {
    OpKind kind;
    double factor;
  };

  std::vector<Node> nodes_;
  std::optional<Fault> fault_;
  bool backward_done_ = false;
};

}  // namespace dcn
