#include "dcn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace dcn {

double relative_error(double analytic, double numeric, double floor) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

GradCheckReport check_gradients(std::span<Parameter* const> params, const LossBuilder& loss,
                                 const GradCheckOptions& options) {
  for (Parameter* p : params) p->zero_grad();
  {
    Tape tape;
    if (options.fault) tape.inject_fault(*options.fault);
    tape.backward(loss(tape));
  }
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (const Parameter* p : params) analytic.push_back(p->grad);

  const auto evaluate = [&loss] {
    Tape tape;
    return tape.value(loss(tape)).item();
  };
  GradCheckReport report;
  for (std::size_t n = 0; n < params.size(); ++n) {
    Parameter& p = *params[n];
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      if (options.skip && options.skip(p, k)) continue;
      const double original = p.value[k];
      p.value[k] = original + options.step;
      const double up = evaluate();
      p.value[k] = original - options.step;
      const double down = evaluate();
      p.value[k] = original;
      const double numeric = (up - down) / (2.0 * options.step);
      const double err = relative_error(analytic[n][k], numeric, options.floor);
      ++report.checked;
      if (err > report.max_rel_error || report.worst_parameter.empty()) {
        report.max_rel_error = err;
        report.worst_parameter = p.name;
        report.worst_index = k;
        report.worst_analytic = analytic[n][k];
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

GradCheckReport check_model_gradients(DcnParameters& params, std::span<const DualSample> batch,
                                      const LossWeights& weights, ForwardMode mode, GradCheckOptions options) {
  const std::size_t d = params.config.embed_dim;
  const Parameter* user_table = &params.user_embedding;
  const Parameter* item_table = &params.item_embedding;
  options.skip = [user_table, item_table, d](const Parameter& p, std::size_t k) {
    return (&p == user_table || &p == item_table) && k < d;
  };
  const auto handles = params.all();
  return check_gradients(
      handles, [&](Tape& tape) { return forward(tape, params, batch, weights, mode).loss_total; }, options);
}

}  // namespace dcn
