#pragma once

#include <cstddef>
#include <functional>

namespace fwi {

/// Runs fn(0..n-1) across OpenMP threads. The first exception (lowest index) is rethrown
/// after every task has finished; results should be written to per-index slots.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

/// Number of threads parallel_for may use; 0 leaves the OpenMP default.
void set_thread_count(int threads);

}  // namespace fwi
