#pragma once

#include <cstddef>
#include <functional>

namespace ntkae {

/// Worker count from NTKAE_THREADS (default: hardware concurrency, at least 1).
std::size_t worker_count();

/// Runs body(i) for i in [0, count) on up to `workers` threads. Each index is
/// processed exactly once; bodies write to disjoint, pre-sized slots, so the
/// result does not depend on scheduling. The first exception (lowest index)
/// is rethrown after all workers join.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body, std::size_t workers = 0);

}  // namespace ntkae
