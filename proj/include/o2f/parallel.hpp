#pragma once

namespace o2f {

/// Number of OpenMP threads kernels may use. Defaults to the OpenMP maximum,
/// capped by the O2F_THREADS environment variable when it is set.
int thread_budget();

/// Overrides the budget for the current process; values < 1 restore the
/// environment-derived default.
void set_thread_budget(int threads);

}  // namespace o2f
