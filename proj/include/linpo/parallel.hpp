#pragma once

#ifdef _OPENMP
#include <omp.h>
#endif

namespace linpo {

inline int hardware_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

/// Runs fn(i) for i in [0, n), on the OpenMP pool when `parallel` is set.
///
/// Every index must touch only its own output slots and must not throw;
/// under that contract the parallel result is bit-identical to the serial
/// one, which the tests rely on. The serial path (`parallel == false`) is
/// the reference implementation.
template <typename F>
void parallel_for(long n, bool parallel, F&& fn) {
#ifdef _OPENMP
  if (parallel && n > 1) {
#pragma omp parallel for schedule(dynamic)
    for (long i = 0; i < n; ++i) fn(i);
    return;
  }
#endif
  (void)parallel;
  for (long i = 0; i < n; ++i) fn(i);
}

}  // namespace linpo
