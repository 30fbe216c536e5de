#pragma once

#include <iosfwd>

namespace dcn {

// Commands: prepare, train, evaluate, ablate, sweep, selftest, synth.
// Returns the process exit code: 0 ok, 1 selftest failure, 2 input error,
// 3 numeric failure, 4 artifact mismatch.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace dcn
