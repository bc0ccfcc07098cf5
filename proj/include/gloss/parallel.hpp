#pragma once

#include <cstddef>
#include <functional>

namespace gloss {

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Work is split into
/// contiguous blocks; callers write results by index so output order never
/// depends on scheduling. The first exception thrown is rethrown.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

/// Thread count from GLOSS_THREADS when set, else `fallback` (minimum 1).
std::size_t resolve_threads(std::size_t fallback);

}  // namespace gloss
