#pragma once

#include <cstddef>
#include <functional>

namespace ctorecon {

/// Worker cap used by parallel loops. Initialised from CTO_THREADS, else 1.
std::size_t thread_count();
void set_thread_count(std::size_t n);

/// Runs body(begin, end) over contiguous chunks of [0, n). Chunks write
/// disjoint outputs, so results do not depend on the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace ctorecon
