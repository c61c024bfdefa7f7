#pragma once

#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace tripletforge {

// Global worker cap, settable from --threads / TRIPLET_FORGE_THREADS.
std::size_t thread_count();
void set_thread_count(std::size_t n);

// Static block partition of [0, n). Each index is processed exactly once and
// workers touch disjoint output ranges, so results do not depend on the
// thread count as long as per-index work is independent.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

} // namespace tripletforge
