#pragma once

#include <cstddef>
#include <functional>

namespace melrvq {

// Worker cap for per-file parallelism: MELRVQ_THREADS when set (clamped to
// [1, hardware_concurrency]), otherwise hardware_concurrency.
int thread_cap();

// Runs fn(i) for i in [0, n) across up to thread_cap() workers. Items must be
// independent; exceptions are rethrown on the caller thread (first one wins).
void parallel_for_items(size_t n, const std::function<void(size_t)>& fn);

}  // namespace melrvq
