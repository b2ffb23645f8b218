#pragma once

#include <functional>

namespace admpc {

/// Number of worker threads the library may use. Reads ADMPC_THREADS once per
/// process; falls back to the OpenMP default when unset or invalid.
int thread_budget();

/// Runs f(i) for i in [0, n). With `parallel` true the iterations are spread
/// over OpenMP threads; otherwise a plain serial loop runs. Callers get
/// identical results either way as long as each iteration writes only to its
/// own output slot; every call site in this library follows that rule so the
/// serial path stays a usable reference implementation.
void parallel_for(int n, const std::function<void(int)>& f, bool parallel = true);

}  // namespace admpc
