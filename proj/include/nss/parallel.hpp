#pragma once

#include <cstddef>
#include <functional>

namespace nss {

/// Runs fn(i) for i in [0, n) on up to `threads` workers using contiguous
/// static chunks. fn must only write state owned by index i; results are then
/// independent of the worker count. threads == 0 means hardware concurrency.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn);

unsigned resolve_threads(unsigned requested) noexcept;

}  // namespace nss
