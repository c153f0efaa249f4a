#pragma once

#include <cstdint>
#include <functional>

namespace edcflow {

// Worker count: min(EDCFLOW_THREADS, hardware_concurrency), at least 1.
int max_threads();
void set_max_threads(int n);

// Runs fn over a static partition of [0, n) on the shared pool. Chunk
// boundaries depend only on n, grain, and the worker count, and chunks must
// write disjoint outputs, so results do not depend on scheduling order.
// Nested calls from inside a worker run inline.
void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn, int64_t grain = 256);

}  // namespace edcflow
