#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace ktrade {

// Process-wide worker count, set once by the CLI (--threads). 0 = hardware.
void set_num_threads(int n);
int num_threads();

// Runs fn(i) for i in [0, n). Work items must write to disjoint locations;
// results are then identical regardless of the thread count. The first
// exception thrown by any worker is rethrown on the calling thread.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

} // namespace ktrade
