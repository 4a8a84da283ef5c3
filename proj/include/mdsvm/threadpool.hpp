#pragma once

#include <cstdint>
#include <functional>

namespace mdsvm {

// Worker count: MDSVM_THREADS if set, otherwise all hardware threads.
int worker_count();

// Splits [0, n) into contiguous chunks and runs fn(begin, end) on the pool.
// Chunks are disjoint, so callers that only write to disjoint output ranges
// stay deterministic regardless of the worker count. Small n runs inline.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& fn);

}  // namespace mdsvm
