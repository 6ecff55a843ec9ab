#pragma once

#include <cstddef>
#include <functional>

namespace mixforge {

/// Worker count: MIXFORGE_THREADS when set and positive, else hardware concurrency.
std::size_t thread_budget();

/// Overrides the worker count for this process (0 restores the environment default).
void set_thread_budget(std::size_t threads);

/// Runs body(i) for i in [0, n). Nested calls from inside a worker run serially.
/// The first exception thrown by any body is rethrown after all workers finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace mixforge
