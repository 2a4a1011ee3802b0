#pragma once

namespace txsp {

/// Worker threads used by the OpenMP kernels. Kernels only split work over
/// independent outputs, so results are bitwise identical for any count.
void set_num_threads(int n);
int num_threads();

/// Reads TXSP_THREADS (default 1) and applies it. Returns the count in effect.
int configure_threads_from_env();

}  // namespace txsp
