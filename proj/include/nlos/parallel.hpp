#pragma once

#include <cstddef>
#include <functional>

namespace nlos {

// Worker pool size: explicit cap > NLOS_THREADS env > hardware concurrency.
void set_thread_cap(int n);
int worker_count();

// Runs fn(i) for i in [0, n). Work items must write disjoint outputs; the
// chunking is deterministic so per-item results never depend on scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace nlos
