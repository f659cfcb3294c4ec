#pragma once

namespace pcenet {

/// Keeps large activation buffers on the heap instead of fresh mmap/munmap
/// pairs per allocation. No-op outside glibc.
void tune_allocator();

}  // namespace pcenet
