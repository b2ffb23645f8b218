#include "admpc/parallel.hpp"

#include <cstdlib>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace admpc {

int thread_budget() {
  static const int budget = [] {
#ifdef _OPENMP
    int n = omp_get_max_threads();
#else
    int n = 1;
#endif
    if (const char* env = std::getenv("ADMPC_THREADS")) {
      char* end = nullptr;
      long v = std::strtol(env, &end, 10);
      if (end != env && v >= 1) n = static_cast<int>(v);
    }
    return n;
  }();
  return budget;
}

void parallel_for(int n, const std::function<void(int)>& f, bool parallel) {
#ifdef _OPENMP
  if (parallel && thread_budget() > 1 && n > 1) {
#pragma omp parallel for schedule(dynamic) num_threads(thread_budget())
    for (int i = 0; i < n; ++i) f(i);
    return;
  }
#else
  (void)parallel;
#endif
  for (int i = 0; i < n; ++i) f(i);
}

}  // namespace admpc
