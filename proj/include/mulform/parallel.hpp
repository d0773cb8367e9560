#pragma once

#include <cstddef>
#include <functional>

namespace mulform {

/// Worker count used by parallel_for; 0 selects hardware concurrency.
void set_thread_count(int threads);
int thread_count();

/// Runs fn(i) for i in [0, count) on the configured workers. Each index is
/// processed exactly once; callers write results to slot i, so the outcome is
/// independent of scheduling. The first exception thrown is rethrown.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn);

}  // namespace mulform
