#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace vprune {

// Splits [0, n) into `workers` contiguous shards and runs fn(shard, begin, end)
// on each, one thread per shard. Shard boundaries depend only on (n, workers).
// The first exception thrown by any shard is rethrown after all threads join.
template <typename Fn>
void for_each_shard(std::size_t n, std::size_t workers, Fn&& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, std::max<std::size_t>(n, 1)));
  if (workers == 1) {
    fn(std::size_t{0}, std::size_t{0}, n);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (std::size_t s = 0; s < workers; ++s) {
    const std::size_t begin = n * s / workers;
    const std::size_t end = n * (s + 1) / workers;
    threads.emplace_back([&, s, begin, end] {
      try {
        fn(s, begin, end);
      } catch (...) {
        errors[s] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace vprune
