#pragma once

#include <cstddef>
#include <functional>

namespace longsim {

// 0 means "all hardware threads".
unsigned resolve_workers(unsigned requested);

// Calls body(i) for every i in [0, n) from up to `workers` threads. Work is
// handed out one index at a time; callers write results by index, so output
// never depends on the schedule. The exception thrown for the lowest index,
// if any, is rethrown after all workers finish.
void parallel_for(std::size_t n, unsigned workers, const std::function<void(std::size_t)>& body);

}  // namespace longsim
