#pragma once

#include <cstddef>
#include <functional>

namespace driftnet {

// Worker count from DRIFTNET_THREADS (0 or unset = hardware concurrency).
std::size_t thread_count();

// Overrides DRIFTNET_THREADS for this process; 0 restores the environment default.
void set_thread_count(std::size_t n);

// Runs body(i) for i in [0, n). Results must not depend on scheduling: callers
// write to disjoint slots indexed by i. The first exception thrown is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace driftnet
