#pragma once

#include <cstddef>
#include <functional>

namespace hl0 {

/// Worker count: HL0_THREADS if set and positive, else the hardware count.
unsigned worker_count();

/// Runs body(i) for i in [0, n) on up to worker_count() threads. Indices are
/// handed out in contiguous blocks; body must only write to slot i.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace hl0
