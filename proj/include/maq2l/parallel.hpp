#pragma once

#include <cstddef>
#include <functional>

namespace maq2l {

// Worker cap from MAQ2L_THREADS, default 1.
std::size_t worker_threads();

// Runs fn(i) for i in [0, n) over up to worker_threads() threads. Each index
// runs exactly once; exceptions are rethrown on the caller (first one wins).
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace maq2l
