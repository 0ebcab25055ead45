#pragma once

#include <cstdint>
#include <functional>

namespace dsppnet {

// Process-wide worker count for the data-parallel kernels.  0 restores the
// hardware default.  Kernels split work into contiguous chunks with disjoint
// writes and keep every accumulation serial in a fixed order, so results are
// bitwise identical for any thread count.
void set_thread_count(int n);
int thread_count();

// Invokes chunk(lo, hi) over a partition of [begin, end).  Runs inline when
// one worker is configured or the range is trivial.
void parallel_for(std::int64_t begin, std::int64_t end,
                  const std::function<void(std::int64_t, std::int64_t)>& chunk);

}  // namespace dsppnet
