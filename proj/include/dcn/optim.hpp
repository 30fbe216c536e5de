#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dcn/rng.hpp"
#include "dcn/tensor.hpp"

namespace dcn {

// Uniform Glorot initialization on [-sqrt(6/(fan_in+fan_out)), +sqrt(...)].
// Matrices use fan_in = rows, fan_out = cols; a vector of n is treated as 1 x n.
Tensor xavier_init(const Shape& shape, SeededRng& rng);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Bias-corrected Adam over a fixed list of parameters.
class Adam {
 public:
  Adam(std::span<Parameter* const> params, AdamConfig config = {});

  // Throws NumericError naming the parameter if any gradient is non-finite;
  // in that case no parameter is modified.
  void step();

  std::uint64_t steps() const { return t_; }
  const AdamConfig& config() const { return config_; }
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }

 private:
  std::vector<Parameter*> params_;
  AdamConfig config_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::uint64_t t_ = 0;
};

}  // namespace dcn
