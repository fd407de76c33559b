#pragma once

#include <cstddef>
#include <functional>

namespace hybens {

// Worker cap from HYBRID_ENSEMBLES_THREADS (unset or 0 = auto).
int thread_cap();

// Runs fn(begin, end) over contiguous chunks covering [0, n). Chunks are
// disjoint, so fn must only write locations derived from its own range.
// Small ranges run inline on the calling thread. Not reentrant.
void parallel_for(std::size_t n,
                  const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace hybens
