#pragma once

#include <cstddef>
#include <functional>

namespace promises {

// Resolves the worker count: explicit request > PROMISES_THREADS env var >
// hardware concurrency.  Always returns at least 1.
int resolve_threads(int requested);

// Runs fn(0..n-1) on up to `threads` workers.  Each index writes only its own
// output slot and every reduction happens serially after the loop, so results
// are bit-identical for any worker count.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace promises
