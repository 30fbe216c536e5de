#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dcn/tape.hpp"

namespace dcn {

using Id = std::uint32_t;

namespace ops {

// Elementwise. Binary ops require identical shapes; the only broadcast is
// scalar-times-tensor via scale().
Var sigmoid(Tape& tape, Var a);
Var tanh(Tape& tape, Var a);
Var relu(Tape& tape, Var a);
Var add(Tape& tape, Var a, Var b);
Var sub(Tape& tape, Var a, Var b);
Var mul(Tape& tape, Var a, Var b);
Var scale(Tape& tape, Var a, double factor);
Var add_scalar(Tape& tape, Var a, double offset);

enum class Transpose { kNone, kRight };

// a[r x k] * b[k x c], or a[r x k] * b^T with b[c x k] for Transpose::kRight.
Var matmul(Tape& tape, Var a, Var b, Transpose transpose = Transpose::kNone);

// a[r x c] plus bias[c] added to every row. Explicit, never implicit.
Var add_bias(Tape& tape, Var a, Var bias);

Var concat(Tape& tape, Var a, Var b, std::size_t axis);

enum class PadRow { kFrozen, kTrainable };

// Row gather. With PadRow::kFrozen, id 0 reads row 0 but never receives gradient.
Var gather_rows(Tape& tape, Var table, std::span<const Id> ids, PadRow pad = PadRow::kFrozen);

// Scalar sum of (a - b)^2 over all elements.
Var squared_l2(Tape& tape, Var a, Var b);
// Per-row squared distance, shape [r x 1].
Var row_squared_distance(Tape& tape, Var a, Var b);

Var sum(Tape& tape, Var a);
// Scalar sum_k weights[k] * a[k]; weights are constants.
Var weighted_sum(Tape& tape, Var a, std::vector<double> weights);
Var sum_squares(Tape& tape, Var a);

// Mean binary cross-entropy of p (r values) against labels in {0,1}; p is
// clamped to [clamp_eps, 1 - clamp_eps] before the log.
Var logloss(Tape& tape, Var p, std::span<const int> labels, double clamp_eps = 1e-12);

// Per-row dot product, shape [r x 1].
Var row_dot(Tape& tape, Var a, Var b);
// Column j of a[r x c], shape [r x 1].
Var column(Tape& tape, Var a, std::size_t j);
// Row i of a scaled by s[i]; s is [r x 1].
Var scale_rows(Tape& tape, Var a, Var s);
// Row-wise softmax over entries with mask 1. Rows with no unmasked entry yield zeros.
Var masked_softmax(Tape& tape, Var logits, std::vector<std::uint8_t> mask);

}  // namespace ops
}  // namespace dcn
