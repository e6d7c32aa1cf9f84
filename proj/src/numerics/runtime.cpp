#include "numerics/runtime.hpp"

#include <mutex>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#if defined(ROHIL_OPENBLAS)
extern "C" void openblas_set_num_threads(int);
#endif

namespace rohil {

void configure_runtime() {
  static std::once_flag once;
  std::call_once(once, [] {
#if defined(__GLIBC__)
    mallopt(M_MMAP_THRESHOLD, 256 << 20);
    mallopt(M_TRIM_THRESHOLD, 512 << 20);
    mallopt(M_TOP_PAD, 64 << 20);
#endif
#if defined(ROHIL_OPENBLAS)
    openblas_set_num_threads(1);
#endif
  });
}

}  // namespace rohil
