#pragma once

#include <cstdint>
#include <functional>

namespace vivit {

// Worker cap for intra-op parallelism. Initialized from VIVIT_THREADS
// (1 = deterministic test mode), else hardware concurrency.
int num_threads();
void set_num_threads(int n);

// Splits [0, n) into contiguous chunks of independent work. Each index is
// processed by exactly one worker, so results do not depend on the thread
// count as long as fn writes only to index-owned outputs.
void parallel_for(std::int64_t n, std::int64_t min_chunk,
                  const std::function<void(std::int64_t begin, std::int64_t end)>& fn);

}  // namespace vivit
