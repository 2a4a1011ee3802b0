#include "txsp/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace txsp {

void set_num_threads(int n) {
#ifdef _OPENMP
  omp_set_num_threads(std::max(1, n));
#else
  (void)n;
#endif
}

int num_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

int configure_threads_from_env() {
  int n = 1;
  if (const char* env = std::getenv("TXSP_THREADS")) {
    try {
      n = std::max(1, std::stoi(env));
    } catch (const std::exception&) {
      n = 1;
    }
  }
  set_num_threads(n);
  return num_threads();
}

}  // namespace txsp
