#pragma once

#include <cstddef>
#include <functional>

namespace usseg {

// Global worker cap for parallel_for. 0 means hardware concurrency.
void set_max_threads(int n);
int max_threads();

// Runs fn(begin, end) over a partition of [0, n). Safe for elementwise work
// where each index writes its own slot; reductions must accumulate into
// fixed, thread-count-independent slots of their own (see net backward).
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);

} // namespace usseg
