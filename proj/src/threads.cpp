#include "san/common.hpp"

#include <omp.h>

#include <cstdlib>
#include <thread>

extern "C" void openblas_set_num_threads(int);

namespace san {

int thread_count() {
  int hw = static_cast<int>(std::thread::hardware_concurrency());
  if (hw < 1) hw = 1;
  const char* env = std::getenv("SAN_THREADS");
  if (env == nullptr || *env == '\0') return hw;
  int v = std::atoi(env);
  if (v <= 0) return hw;  // 0 = auto
  return v < hw ? v : hw;
}

void configure_threads() {
  omp_set_num_threads(thread_count());
  // Outer loops own the parallelism; nested BLAS threading would just
  // oversubscribe the cores and break run-to-run determinism.
  openblas_set_num_threads(1);
}

}  // namespace san
