#pragma once

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace hdn {

// The training loop churns through multi-hundred-KB activation buffers every
// step; keeping them on the heap instead of round-tripping through mmap
// removes the kernel zero-fill cost. Call once from main().
inline void tune_allocator() {
#if defined(__GLIBC__)
    mallopt(M_MMAP_THRESHOLD, 512 * 1024 * 1024);
    mallopt(M_TRIM_THRESHOLD, 512 * 1024 * 1024);
#endif
}

} // namespace hdn
