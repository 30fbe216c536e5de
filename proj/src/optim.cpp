#include "dcn/optim.hpp"

#include <cmath>
#include <stdexcept>

#include "dcn/errors.hpp"

namespace dcn {

Tensor xavier_init(const Shape& shape, SeededRng& rng) {
  if (shape.empty() || shape.size() > 2) throw ShapeError("xavier_init: unsupported shape " + shape_string(shape));
  for (auto e : shape)
    if (e == 0) throw ShapeError("xavier_init: zero extent in shape " + shape_string(shape));
  const double fan_in = shape.size() == 2 ? static_cast<double>(shape[0]) : 1.0;
  const double fan_out = static_cast<double>(shape.back());
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  Tensor out(shape);
  for (double& v : out.values()) v = rng.uniform(-bound, bound);
  return out;
}

Adam::Adam(std::span<Parameter* const> params, AdamConfig config)
    : params_(params.begin(), params.end()), config_(config) {
  if (!(config_.lr > 0.0)) throw std::invalid_argument("Adam: lr must be positive");
  if (config_.beta1 < 0.0 || config_.beta1 >= 1.0 || config_.beta2 < 0.0 || config_.beta2 >= 1.0)
    throw std::invalid_argument("Adam: betas must lie in [0, 1)");
  if (!(config_.epsilon > 0.0)) throw std::invalid_argument("Adam: epsilon must be positive");
  for (const Parameter* p : params_) {
    if (p->grad.shape() != p->value.shape())
      throw ShapeError("Adam: gradient of '" + p->name + "' has shape " + shape_string(p->grad.shape()) +
                       ", parameter has " + shape_string(p->value.shape()));
    m_.emplace_back(p->value.shape(), 0.0);
    v_.emplace_back(p->value.shape(), 0.0);
  }
}

void Adam::step() {
  for (const Parameter* p : params_) {
    if (p->grad.shape() != p->value.shape())
      throw ShapeError("Adam: gradient of '" + p->name + "' has shape " + shape_string(p->grad.shape()) +
                       ", parameter has " + shape_string(p->value.shape()));
    if (!p->grad.all_finite()) throw NumericError("Adam: non-finite gradient in parameter '" + p->name + "'");
  }
  ++t_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t n = 0; n < params_.size(); ++n) {
    auto w = params_[n]->value.values();
    auto g = params_[n]->grad.values();
    auto m = m_[n].values();
    auto v = v_[n].values();
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = b1 * m[k] + (1.0 - b1) * g[k];
      v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      w[k] -= config_.lr * mhat / (std::sqrt(vhat) + config_.epsilon);
    }
  }
}

}  // namespace dcn
