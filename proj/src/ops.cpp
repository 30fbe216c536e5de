#include "dcn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "dcn/errors.hpp"

namespace dcn::ops {

namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
}

void require_rank2(const char* op, const Tensor& a) {
  if (a.rank() != 2)
    throw ShapeError(std::string(op) + ": expected a matrix, got shape " + shape_string(a.shape()));
}

// out[r x c] += a[r x k] * b[k x c], written as row updates so the inner loop vectorizes.
void gemm_acc(const double* a, const double* b, double* out, std::size_t r, std::size_t k, std::size_t c) {
  for (std::size_t i = 0; i < r; ++i) {
    double* orow = out + i * c;
    for (std::size_t q = 0; q < k; ++q) {
      const double av = a[i * k + q];
      const double* brow = b + q * c;
      for (std::size_t j = 0; j < c; ++j) orow[j] += av * brow[j];
    }
  }
}

std::vector<double> transposed(const double* m, std::size_t rows, std::size_t cols) {
  std::vector<double> out(rows * cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[j * rows + i] = m[i * cols + j];
  return out;
}

template <typename Fn>
Var unary(Tape& tape, OpKind kind, Var a, Fn&& fn, Tape::BackwardFn backward) {
  const Tensor& x = tape.value(a);
  Tensor out(x.shape());
  for (std::size_t k = 0; k < x.size(); ++k) out[k] = fn(x[k]);
  return tape.record(kind, std::move(out), std::move(backward));
}

}  // namespace

Var sigmoid(Tape& tape, Var a) {
  return unary(
      tape, OpKind::kSigmoid, a, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [a](Tape& t, std::size_t self) {
        const Tensor& y = t.value(self);
        const Tensor& g = t.grad(self);
        Tensor& ga = t.grad_buffer(a.index);
        for (std::size_t k = 0; k < y.size(); ++k) ga[k] += g[k] * y[k] * (1.0 - y[k]);
      });
}

Var tanh(Tape& tape, Var a) {
  return unary(
      tape, OpKind::kTanh, a, [](double v) { return std::tanh(v); },
      [a](Tape& t, std::size_t self) {
        const Tensor& y = t.value(self);
        const Tensor& g = t.grad(self);
        Tensor& ga = t.grad_buffer(a.index);
        for (std::size_t k = 0; k < y.size(); ++k) ga[k] += g[k] * (1.0 - y[k] * y[k]);
      });
}

Var relu(Tape& tape, Var a) {
  return unary(
      tape, OpKind::kRelu, a, [](double v) { return v > 0.0 ? v : 0.0; },
      [a](Tape& t, std::size_t self) {
        const Tensor& x = t.value(a);
        const Tensor& g = t.grad(self);
        Tensor& ga = t.grad_buffer(a.index);
        for (std::size_t k = 0; k < x.size(); ++k)
          if (x[k] > 0.0) ga[k] += g[k];
      });
}

Var add(Tape& tape, Var a, Var b) {
  const Tensor& x = tape.value(a);
  const Tensor& y = tape.value(b);
  require_same_shape("add", x, y);
  Tensor out(x.shape());
  for (std::size_t k = 0; k < x.size(); ++k) out[k] = x[k] + y[k];
  return tape.record(OpKind::kAdd, std::move(out), [a, b](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad_buffer(a.index);
    for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k];
    Tensor& gb = t.grad_buffer(b.index);
    for (std::size_t k = 0; k < g.size(); ++k) gb[k] += g[k];
  });
}

Var sub(Tape& tape, Var a, Var b) {
  const Tensor& x = tape.value(a);
  const Tensor& y = tape.value(b);
  require_same_shape("sub", x, y);
  Tensor out(x.shape());
  for (std::size_t k = 0; k < x.size(); ++k) out[k] = x[k] - y[k];
  return tape.record(OpKind::kSub, std::move(out), [a, b](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad_buffer(a.index);
    for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k];
    Tensor& gb = t.grad_buffer(b.index);
    for (std::size_t k = 0; k < g.size(); ++k) gb[k] -= g[k];
  });
}

Var mul(Tape& tape, Var a, Var b) {
  const Tensor& x = tape.value(a);
  const Tensor& y = tape.value(b);
  require_same_shape("mul", x, y);
  Tensor out(x.shape());
  for (std::size_t k = 0; k < x.size(); ++k) out[k] = x[k] * y[k];
  return tape.record(OpKind::kMul, std::move(out), [a, b](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    {
      const Tensor& y = t.value(b);
      Tensor& ga = t.grad_buffer(a.index);
      for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k] * y[k];
    }
    const Tensor& x = t.value(a);
    Tensor& gb = t.grad_buffer(b.index);
    for (std::size_t k = 0; k < g.size(); ++k) gb[k] += g[k] * x[k];
  });
}

Var scale(Tape& tape, Var a, double factor) {
  return unary(
      tape, OpKind::kScale, a, [factor](double v) { return factor * v; },
      [a, factor](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        Tensor& ga = t.grad_buffer(a.index);
        for (std::size_t k = 0; k < g.size(); ++k) ga[k] += factor * g[k];
      });
}

Var add_scalar(Tape& tape, Var a, double offset) {
  return unary(
      tape, OpKind::kAddScalar, a, [offset](double v) { return v + offset; },
      [a](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        Tensor& ga = t.grad_buffer(a.index);
        for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k];
      });
}

Var matmul(Tape& tape, Var a, Var b, Transpose transpose) {
  const Tensor& x = tape.value(a);
  const Tensor& w = tape.value(b);
  require_rank2("matmul", x);
  require_rank2("matmul", w);
  const bool tr = transpose == Transpose::kRight;
  const std::size_t r = x.shape()[0];
  const std::size_t k = x.shape()[1];
  const std::size_t inner = tr ? w.shape()[1] : w.shape()[0];
  const std::size_t c = tr ? w.shape()[0] : w.shape()[1];
  if (inner != k)
    throw ShapeError("matmul: inner dimensions disagree, " + shape_string(x.shape()) +
                     (tr ? " * transpose of " : " * ") + shape_string(w.shape()));

  Tensor out({r, c}, 0.0);
  if (tr)
    gemm_acc(x.data(), transposed(w.data(), c, k).data(), out.data(), r, k, c);
  else
    gemm_acc(x.data(), w.data(), out.data(), r, k, c);

  return tape.record(OpKind::kMatmul, std::move(out), [a, b, tr, r, k, c](Tape& t, std::size_t self) {
    const double* g = t.grad(self).data();
    const double* wp = t.value(b).data();
    const double* xp = t.value(a).data();
    // dL/da = g * b^T, or g * b when b entered transposed.
    double* ga = t.grad_buffer(a.index).data();
    if (tr)
      gemm_acc(g, wp, ga, r, c, k);
    else
      gemm_acc(g, transposed(wp, k, c).data(), ga, r, c, k);
    // dL/db = a^T * g, or g^T * a when b entered transposed.
    double* gw = t.grad_buffer(b.index).data();
    if (tr)
      gemm_acc(transposed(g, r, c).data(), xp, gw, c, r, k);
    else
      gemm_acc(transposed(xp, r, k).data(), g, gw, k, r, c);
  });
}

Var add_bias(Tape& tape, Var a, Var bias) {
  const Tensor& x = tape.value(a);
  const Tensor& bv = tape.value(bias);
  require_rank2("add_bias", x);
  if (bv.rank() != 1 || bv.size() != x.cols())
    throw ShapeError("add_bias: bias " + shape_string(bv.shape()) + " does not match columns of " +
                     shape_string(x.shape()));
  const std::size_t r = x.rows();
  const std::size_t c = x.cols();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = x[i * c + j] + bv[j];
  return tape.record(OpKind::kAddBias, std::move(out), [a, bias, r, c](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad_buffer(a.index);
    for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k];
    Tensor& gb = t.grad_buffer(bias.index);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) gb[j] += g[i * c + j];
  });
}

Var concat(Tape& tape, Var a, Var b, std::size_t axis) {
  const Tensor& x = tape.value(a);
  const Tensor& y = tape.value(b);
  const auto fail = [&] {
    throw ShapeError("concat: incompatible shapes " + shape_string(x.shape()) + " and " +
                     shape_string(y.shape()) + " on axis " + std::to_string(axis));
  };
  if (x.rank() != y.rank() || axis >= x.rank()) fail();

  if (x.rank() == 1 || axis == 0) {
    if (x.rank() == 2 && x.cols() != y.cols()) fail();
    Shape shape = x.shape();
    shape[0] += y.shape()[0];
    std::vector<double> values(x.values().begin(), x.values().end());
    values.insert(values.end(), y.values().begin(), y.values().end());
    const std::size_t split = x.size();
    return tape.record(OpKind::kConcat, Tensor(std::move(shape), std::move(values)),
                       [a, b, split](Tape& t, std::size_t self) {
                         const Tensor& g = t.grad(self);
                         Tensor& ga = t.grad_buffer(a.index);
                         for (std::size_t k = 0; k < split; ++k) ga[k] += g[k];
                         Tensor& gb = t.grad_buffer(b.index);
                         for (std::size_t k = split; k < g.size(); ++k) gb[k - split] += g[k];
                       });
  }

  if (x.rows() != y.rows()) fail();
  const std::size_t r = x.rows();
  const std::size_t ca = x.cols();
  const std::size_t cb = y.cols();
  const std::size_t c = ca + cb;
  Tensor out({r, c});
  for (std::size_t i = 0; i < r; ++i) {
    std::copy_n(x.data() + i * ca, ca, out.data() + i * c);
    std::copy_n(y.data() + i * cb, cb, out.data() + i * c + ca);
  }
  return tape.record(OpKind::kConcat, std::move(out), [a, b, r, ca, cb, c](Tape& t, std::size_t self) {
    const double* g = t.grad(self).data();
    double* ga = t.grad_buffer(a.index).data();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < ca; ++j) ga[i * ca + j] += g[i * c + j];
    double* gb = t.grad_buffer(b.index).data();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < cb; ++j) gb[i * cb + j] += g[i * c + ca + j];
  });
}

Var gather_rows(Tape& tape, Var table, std::span<const Id> ids, PadRow pad) {
  const Tensor& tab = tape.value(table);
  require_rank2("gather_rows", tab);
  if (ids.empty()) throw ShapeError("gather_rows: empty id list");
  const std::size_t n = tab.rows();
  const std::size_t d = tab.cols();
  for (Id id : ids)
    if (id >= n)
      throw std::out_of_range("gather_rows: id " + std::to_string(id) + " out of range for table " +
                              shape_string(tab.shape()));
  Tensor out({ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i)
    std::copy_n(tab.data() + std::size_t{ids[i]} * d, d, out.data() + i * d);
  std::vector<Id> idx(ids.begin(), ids.end());
  const bool frozen = pad == PadRow::kFrozen;
  return tape.record(OpKind::kGather, std::move(out),
                     [table, idx = std::move(idx), d, frozen](Tape& t, std::size_t self) {
                       const double* g = t.grad(self).data();
                       double* gt = t.grad_buffer(table.index).data();
                       for (std::size_t i = 0; i < idx.size(); ++i) {
                         if (frozen && idx[i] == 0) continue;
                         double* row = gt + std::size_t{idx[i]} * d;
                         for (std::size_t j = 0; j < d; ++j) row[j] += g[i * d + j];
                       }
                     });
}

Var squared_l2(Tape& tape, Var a, Var b) {
  const Tensor& x = tape.value(a);
  const Tensor& y = tape.value(b);
  require_same_shape("squared_l2", x, y);
  double acc = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double d = x[k] - y[k];
    acc += d * d;
  }
  return tape.record(OpKind::kSquaredL2, Tensor::scalar(acc), [a, b](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    const Tensor& x = t.value(a);
    const Tensor& y = t.value(b);
    Tensor& ga = t.grad_buffer(a.index);
    for (std::size_t k = 0; k < x.size(); ++k) ga[k] += 2.0 * g * (x[k] - y[k]);
    Tensor& gb = t.grad_buffer(b.index);
    for (std::size_t k = 0; k < x.size(); ++k) gb[k] -= 2.0 * g * (x[k] - y[k]);
  });
}

Var row_squared_distance(Tape& tape, Var a, Var b) {
  const Tensor& x = tape.value(a);
  const Tensor& y = tape.value(b);
  require_same_shape("row_squared_distance", x, y);
  const std::size_t r = x.rows();
  const std::size_t c = x.cols();
  Tensor out({r, 1});
  for (std::size_t i = 0; i < r; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double d = x[i * c + j] - y[i * c + j];
      acc += d * d;
    }
    out[i] = acc;
  }
  return tape.record(OpKind::kRowSquaredDistance, std::move(out), [a, b, r, c](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& x = t.value(a);
    const Tensor& y = t.value(b);
    Tensor& ga = t.grad_buffer(a.index);
    Tensor& gb = t.grad_buffer(b.index);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) {
        const double d = 2.0 * g[i] * (x[i * c + j] - y[i * c + j]);
        ga[i * c + j] += d;
        gb[i * c + j] -= d;
      }
  });
}

Var sum(Tape& tape, Var a) {
  const Tensor& x = tape.value(a);
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  return tape.record(OpKind::kSum, Tensor::scalar(acc), [a](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    for (double& v : t.grad_buffer(a.index).values()) v += g;
  });
}

Var weighted_sum(Tape& tape, Var a, std::vector<double> weights) {
  const Tensor& x = tape.value(a);
  if (weights.size() != x.size())
    throw ShapeError("weighted_sum: " + std::to_string(weights.size()) + " weights for tensor " +
                     shape_string(x.shape()));
  double acc = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) acc += weights[k] * x[k];
  return tape.record(OpKind::kWeightedSum, Tensor::scalar(acc),
                     [a, w = std::move(weights)](Tape& t, std::size_t self) {
                       const double g = t.grad(self)[0];
                       Tensor& ga = t.grad_buffer(a.index);
                       for (std::size_t k = 0; k < w.size(); ++k) ga[k] += g * w[k];
                     });
}

Var sum_squares(Tape& tape, Var a) {
  const Tensor& x = tape.value(a);
  double acc = 0.0;
  for (double v : x.values()) acc += v * v;
  return tape.record(OpKind::kSumSquares, Tensor::scalar(acc), [a](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    const Tensor& x = t.value(a);
    Tensor& ga = t.grad_buffer(a.index);
    for (std::size_t k = 0; k < x.size(); ++k) ga[k] += 2.0 * g * x[k];
  });
}

Var logloss(Tape& tape, Var p, std::span<const int> labels, double clamp_eps) {
  const Tensor& x = tape.value(p);
  if (x.size() != labels.size())
    throw ShapeError("logloss: " + std::to_string(labels.size()) + " labels for predictions " +
                     shape_string(x.shape()));
  for (int y : labels)
    if (y != 0 && y != 1) throw std::invalid_argument("logloss: label " + std::to_string(y) + " not in {0,1}");
  const std::size_t n = x.size();
  double acc = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double pc = std::clamp(x[k], clamp_eps, 1.0 - clamp_eps);
    acc += labels[k] ? std::log(pc) : std::log(1.0 - pc);
  }
  std::vector<int> ys(labels.begin(), labels.end());
  return tape.record(OpKind::kLogLoss, Tensor::scalar(-acc / static_cast<double>(n)),
                     [p, ys = std::move(ys), clamp_eps](Tape& t, std::size_t self) {
                       const double g = t.grad(self)[0];
                       const std::size_t n = ys.size();
                       const Tensor& x = t.value(p);
                       Tensor& gp = t.grad_buffer(p.index);
                       for (std::size_t k = 0; k < n; ++k) {
                         if (x[k] < clamp_eps || x[k] > 1.0 - clamp_eps) continue;
                         const double d = ys[k] ? -1.0 / x[k] : 1.0 / (1.0 - x[k]);
                         gp[k] += g * d / static_cast<double>(n);
                       }
                     });
}

Var row_dot(Tape& tape, Var a, Var b) {
  const Tensor& x = tape.value(a);
  const Tensor& y = tape.value(b);
  require_same_shape("row_dot", x, y);
  const std::size_t r = x.rows();
  const std::size_t c = x.cols();
  Tensor out({r, 1});
  for (std::size_t i = 0; i < r; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < c; ++j) acc += x[i * c + j] * y[i * c + j];
    out[i] = acc;
  }
  return tape.record(OpKind::kRowDot, std::move(out), [a, b, r, c](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& x = t.value(a);
    const Tensor& y = t.value(b);
    Tensor& ga = t.grad_buffer(a.index);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[i] * y[i * c + j];
    Tensor& gb = t.grad_buffer(b.index);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) gb[i * c + j] += g[i] * x[i * c + j];
  });
}

Var column(Tape& tape, Var a, std::size_t j) {
  const Tensor& x = tape.value(a);
  require_rank2("column", x);
  if (j >= x.cols())
    throw ShapeError("column: index " + std::to_string(j) + " out of range for " + shape_string(x.shape()));
  const std::size_t r = x.rows();
  const std::size_t c = x.cols();
  Tensor out({r, 1});
  for (std::size_t i = 0; i < r; ++i) out[i] = x[i * c + j];
  return tape.record(OpKind::kColumn, std::move(out), [a, j, r, c](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad_buffer(a.index);
    for (std::size_t i = 0; i < r; ++i) ga[i * c + j] += g[i];
  });
}

Var scale_rows(Tape& tape, Var a, Var s) {
  const Tensor& x = tape.value(a);
  const Tensor& sv = tape.value(s);
  require_rank2("scale_rows", x);
  if (sv.shape() != Shape{x.rows(), 1})
    throw ShapeError("scale_rows: scales " + shape_string(sv.shape()) + " do not match rows of " +
                     shape_string(x.shape()));
  const std::size_t r = x.rows();
  const std::size_t c = x.cols();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = sv[i] * x[i * c + j];
  return tape.record(OpKind::kScaleRows, std::move(out), [a, s, r, c](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& x = t.value(a);
    const Tensor& sv = t.value(s);
    Tensor& ga = t.grad_buffer(a.index);
    Tensor& gs = t.grad_buffer(s.index);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) {
        ga[i * c + j] += g[i * c + j] * sv[i];
        gs[i] += g[i * c + j] * x[i * c + j];
      }
  });
}

Var masked_softmax(Tape& tape, Var logits, std::vector<std::uint8_t> mask) {
  const Tensor& x = tape.value(logits);
  require_rank2("masked_softmax", x);
  if (mask.size() != x.size())
    throw ShapeError("masked_softmax: mask of " + std::to_string(mask.size()) + " entries for " +
                     shape_string(x.shape()));
  const std::size_t r = x.rows();
  const std::size_t c = x.cols();
  Tensor out(x.shape(), 0.0);
  for (std::size_t i = 0; i < r; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j)
      if (mask[i * c + j]) mx = std::max(mx, x[i * c + j]);
    if (!std::isfinite(mx)) continue;
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j)
      if (mask[i * c + j]) z += (out[i * c + j] = std::exp(x[i * c + j] - mx));
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= z;
  }
  return tape.record(OpKind::kMaskedSoftmax, std::move(out), [logits, r, c](Tape& t, std::size_t self) {
    const Tensor& y = t.value(self);
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad_buffer(logits.index);
    // Masked entries have y = 0, so they receive no gradient.
    for (std::size_t i = 0; i < r; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += g[i * c + j] * y[i * c + j];
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += y[i * c + j] * (g[i * c + j] - dot);
    }
  });
}

}  // namespace dcn::ops
