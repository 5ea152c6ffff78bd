#pragma once

#include <cstddef>
#include <functional>

namespace emovec {

// Worker cap from EMOVEC_THREADS (unset or invalid: 1).
std::size_t worker_count();

// Runs f(i) for i in [0, n) on up to worker_count() threads. Callers write
// results into slot i so the outcome does not depend on scheduling. The
// first exception thrown by any task is rethrown after all workers join.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& f);

}  // namespace emovec
