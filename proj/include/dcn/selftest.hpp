#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dcn/gradcheck.hpp"
#include "dcn/model.hpp"

namespace dcn {

// A small random model and batch for gradient checks: catalogs of 6 users and
// 8 items, mixed labels, partially padded sequences.
struct TinyProblem {
  DcnParameters params;
  std::vector<DualSample> batch;
};

TinyProblem make_tiny_problem(std::uint64_t seed, Backbone backbone = Backbone::kGru, std::size_t embed_dim = 4,
                              std::size_t max_seq_len = 5, std::size_t batch_size = 3,
                              StaticTowerInput static_input = StaticTowerInput::kEmbeddings);

struct OpGradResult {
  std::string name;  // e.g. "matmul/transposed"
  OpKind kind;
  GradCheckReport report;
};

inline constexpr double kOpGradTolerance = 1e-6;
inline constexpr double kModelGradTolerance = 1e-4;

// Finite-difference check of every op's backward rule on random inputs.
std::vector<OpGradResult> check_op_gradients(std::uint64_t seed, std::optional<OpKind> fault = std::nullopt);

struct CheckOutcome {
  std::string suite;
  std::string name;
  bool passed = false;
  std::string detail;
};

struct SelftestOptions {
  std::uint64_t seed = 1;
  std::optional<OpKind> fault;
};

// Gradient, metric-oracle and invariant suites.
std::vector<CheckOutcome> run_selftest(const SelftestOptions& options);

// Per-suite counts, then one line per failure. Returns true when all passed.
bool print_selftest_summary(std::ostream& out, const std::vector<CheckOutcome>& outcomes);

}  // namespace dcn
