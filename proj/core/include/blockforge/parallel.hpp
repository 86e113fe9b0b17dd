#pragma once

#include <cstddef>
#include <functional>

namespace blockforge {

// Worker cap: BLOCKFORGE_THREADS if set and positive, otherwise the hardware
// concurrency.
int worker_count();

// Runs fn(i) for i in [0, n). Each index is visited exactly once; results
// must be written to per-index slots for deterministic output.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace blockforge
