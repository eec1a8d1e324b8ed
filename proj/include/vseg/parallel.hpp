#pragma once

#include <cstdint>
#include <functional>

namespace vseg {

/// Caps the number of worker threads used by parallel_for. 0 selects the
/// number of available cores.
void set_thread_count(int n);
int thread_count();

/// Runs body(begin, end) over disjoint chunks of [0, n). Every index is
/// visited by exactly one call, so results do not depend on the thread count
/// as long as body writes only to index-owned outputs.
void parallel_for(std::int64_t n,
                  const std::function<void(std::int64_t, std::int64_t)>& body,
                  std::int64_t min_chunk = 1024);

}  // namespace vseg
