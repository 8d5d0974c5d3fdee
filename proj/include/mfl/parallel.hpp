#pragma once

#include <cstddef>
#include <exception>
#include <functional>

namespace mfl {

/// Worker count from MFL_THREADS, falling back to hardware concurrency.
unsigned worker_count();

/// Runs body(i) for i in [0, n) over contiguous chunks. Results must be
/// written to per-index slots; the first exception is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace mfl
