#pragma once

#include <iosfwd>
#include <vector>

namespace txsp {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 2,    // bad arguments, shapes, configs or datasets
  kExitMissing = 3,  // missing or unusable weights, checkpoints, inputs
  kExitNumeric = 4,  // non-finite values during compute
};

/// Entry point of the `txsp` tool: synthesize, train, selfsim, eval, init.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Achievable noise-mode extents nearest to `target` for an input extent
/// (one below, one at-or-above; equal when exact).
std::vector<int> nearest_noise_extents(int input_extent, int target);

}  // namespace txsp
