#pragma once

#include <cstddef>
#include <functional>

namespace selfprop {

// Worker count: SELFPROP_THREADS if set, else hardware concurrency.
int thread_count();
void set_thread_count(int n);

// Runs body(i) for i in [0, n) on up to thread_count() threads. Each index
// is handled exactly once; any reduction must be done by the caller in
// index order so results do not depend on the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

} // namespace selfprop
