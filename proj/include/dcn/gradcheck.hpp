#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>

#include "dcn/model.hpp"
#include "dcn/tape.hpp"

namespace dcn {

struct GradCheckOptions {
  double step = 1e-5;
  // Relative errors use max(|analytic|, |numeric|, floor) as denominator, so
  // gradients far below the finite-difference noise level are compared absolutely.
  double floor = 1e-6;
  std::optional<OpKind> fault;  // passed to Tape::inject_fault for the analytic pass
  // Elements to leave out, e.g. frozen pad rows.
  std::function<bool(const Parameter&, std::size_t)> skip;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
};

double relative_error(double analytic, double numeric, double floor);

// Compares the tape gradient of `loss` with central finite differences for
// every element of every parameter. `loss` must rebuild the graph from the
// current parameter values and return a scalar.
using LossBuilder = std::function<Var(Tape&)>;
GradCheckReport check_gradients(std::span<Parameter* const> params, const LossBuilder& loss,
                                 const GradCheckOptions& options = {});

// Full-model check of L_total; embedding pad rows are skipped.
GradCheckReport check_model_gradients(DcnParameters& params, std::span<const DualSample> batch,
                                      const LossWeights& weights, ForwardMode mode = ForwardMode::kFull,
                                      GradCheckOptions options = {});

}  // namespace dcn
