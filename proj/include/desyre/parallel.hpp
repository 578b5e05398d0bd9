#pragma once

#include <cstdint>
#include <functional>

namespace desyre {

/// Process-wide worker cap, set once by the CLI (--threads). Library code
/// reads it through parallel_for; 1 means fully sequential execution.
namespace threads {
void set_count(int n);
int count();
}  // namespace threads

/// Runs fn(i) for i in [0, n). Work is split into contiguous chunks, one
/// per worker, so every index always runs on the same worker for a fixed
/// thread count. Results must be written to per-index slots; reductions
/// happen afterwards in index order, which keeps outputs bit-identical
/// for a fixed configuration.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t)>& fn);

}  // namespace desyre
