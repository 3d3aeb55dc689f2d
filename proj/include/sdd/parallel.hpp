#pragma once

#include <cstddef>
#include <functional>

namespace sdd {

// Global worker count for parallel_for. 1 (the default) runs everything
// inline on the calling thread.
void set_thread_count(int n);
int thread_count();

// Splits [begin, end) into fixed-size blocks and runs fn(block_begin,
// block_end) for each. Blocks are defined by block_size alone, never by the
// worker count, so any per-block partial results can be reduced in block
// order to get results that do not depend on how many threads ran.
void parallel_for_blocked(size_t begin, size_t end, size_t block_size,
                          const std::function<void(size_t, size_t)>& fn);

}  // namespace sdd
