#pragma once

namespace rohil {

// Process-wide tuning, applied once: keeps large tensor buffers on the heap
// instead of fresh mmap pages per allocation, and pins BLAS to one thread so
// concurrent experiment cells do not oversubscribe cores.
void configure_runtime();

}  // namespace rohil
