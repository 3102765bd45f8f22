#pragma once

#include <cstddef>
#include <functional>

namespace cryptosynth {

// Runs fn(0..n-1) on up to `workers` threads (0 or 1 runs inline). Indices
// are claimed in increasing order. The first exception thrown by any call is
// rethrown after all workers stop; unclaimed indices are then skipped.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

}  // namespace cryptosynth
