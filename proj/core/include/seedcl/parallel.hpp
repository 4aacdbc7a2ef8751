#pragma once

#include <cstddef>
#include <functional>

namespace seedcl {

/// Worker cap from SEEDCL_THREADS; 1 when unset or unparsable.
int configured_threads();

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Work is handed out
/// in contiguous chunks; fn must only write state owned by index i. The first
/// exception thrown by any worker is rethrown after all workers join.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace seedcl
