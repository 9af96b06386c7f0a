#pragma once

#include <cstddef>
#include <functional>

namespace scoregrad {

/// Resolves a requested thread count; 0 means all available cores.
std::size_t resolve_threads(std::size_t requested) noexcept;

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Work items are
/// claimed dynamically; the first exception thrown is rethrown after all
/// workers stop.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

}  // namespace scoregrad
