#pragma once

#include <functional>

namespace perfms {

// Runs fn(i) for i in [0, n) on up to `threads` workers. Each index must write
// only to its own output slot; results are then independent of scheduling.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

} // namespace perfms
