#pragma once

#include "msbdl/model.hpp"

#include <algorithm>
#include <exception>
#include <thread>
#include <vector>

namespace msbdl::detail {

// Runs body(i) for i in [0, count) on up to `threads` workers. Work is split
// into contiguous blocks, so any per-index output is independent of the
// thread count; the first exception thrown is rethrown on the caller.
template <class Body>
void parallel_for(Index count, Index threads, const Body& body) {
  const Index workers = std::clamp<Index>(threads, 1, std::max<Index>(count, 1));
  if (workers == 1) {
    for (Index i = 0; i < count; ++i) body(i);
    return;
  }
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  const Index chunk = (count + workers - 1) / workers;
  for (Index t = 0; t < workers; ++t) {
    pool.emplace_back([&, t] {
      try {
        const Index end = std::min(count, (t + 1) * chunk);
        for (Index i = t * chunk; i < end; ++i) body(i);
      } catch (...) {
        errors[static_cast<std::size_t>(t)] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace msbdl::detail
