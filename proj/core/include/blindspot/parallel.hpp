#pragma once

#include <cstddef>
#include <functional>

namespace blindspot {

// Worker count from DENOISE_THREADS: unset uses the hardware concurrency,
// 0 or 1 selects the single-thread deterministic mode.
std::size_t configured_threads();

// Runs fn(i) for i in [0, n) on up to `threads` workers. Each index is
// handled exactly once; callers write results to per-index slots, so the
// outcome does not depend on scheduling. The first exception is rethrown.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

}  // namespace blindspot
