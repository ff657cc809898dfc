#pragma once

#include <cstddef>
#include <functional>

namespace pftopics {

/// Worker count from PFTOPICS_THREADS, falling back to 1.
unsigned default_thread_count();

/// Calls fn(i) for i in [0, n) on up to `threads` workers. Each index is
/// visited exactly once; callers write results to per-index slots and reduce
/// afterwards so the outcome does not depend on scheduling.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn);

}  // namespace pftopics
