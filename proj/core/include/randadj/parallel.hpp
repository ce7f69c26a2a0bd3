#pragma once

#include <cstdint>
#include <functional>

namespace randadj {

/// Worker count: RANDADJ_THREADS when set (values < 1 clamp to 1), otherwise
/// the hardware concurrency.
int default_threads();

/// Runs body(i) for i in [0, n) on up to `threads` workers in contiguous
/// blocks. Iterations must be independent; the first exception thrown by any
/// worker is rethrown after all workers join.
void parallel_for(std::int64_t n, int threads, const std::function<void(std::int64_t)>& body);

}  // namespace randadj
