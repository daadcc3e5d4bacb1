#pragma once

namespace shillforge::nk {

/// Keeps large tensor buffers in the heap instead of returning them to the OS on every
/// free. Tapes allocate and release multi-megabyte buffers each step, and without this
/// glibc services each one with fresh, page-faulting mappings. No-op on other libcs.
void tune_allocator();

}  // namespace shillforge::nk
