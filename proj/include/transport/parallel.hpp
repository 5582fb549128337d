#pragma once

// Index-ordered parallel map. Results land in their own slot, so the output
// does not depend on the worker count or on scheduling.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <type_traits>
#include <vector>

namespace transport {

inline int resolve_workers(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

template <class Fn>
auto parallel_map(std::size_t count, int workers, Fn&& fn) {
  using R = std::invoke_result_t<Fn&, std::size_t>;
  std::vector<R> results(count);
  std::vector<std::exception_ptr> errors(count);
  const auto threads = static_cast<std::size_t>(std::max(1, std::min<int>(resolve_workers(workers), static_cast<int>(std::max<std::size_t>(count, 1)))));
  std::atomic<std::size_t> next{0};
  auto run = [&] {
    for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
      try {
        results[i] = fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (threads <= 1) {
    run();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(run);
    for (auto& th : pool) th.join();
  }
  // Report the lowest-index failure so errors are reproducible too.
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return results;
}

}  // namespace transport
