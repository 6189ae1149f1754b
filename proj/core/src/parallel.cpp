#include "vivit/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace vivit {

namespace {

int initial_threads() {
  if (const char* env = std::getenv("VIVIT_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n >= 1) return n;
    } catch (...) {
    }
  }
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

std::atomic<int>& thread_cap() {
  static std::atomic<int> cap{initial_threads()};
  return cap;
}

}  // namespace

int num_threads() { return thread_cap().load(); }

void set_num_threads(int n) { thread_cap().store(std::max(1, n)); }

void parallel_for(std::int64_t n, std::int64_t min_chunk,
                  const std::function<void(std::int64_t, std::int64_t)>& fn) {
  if (n <= 0) return;
  const std::int64_t max_workers = std::max<std::int64_t>(1, n / std::max<std::int64_t>(1, min_chunk));
  const auto workers = std::min<std::int64_t>(num_threads(), max_workers);
  if (workers <= 1) {
    fn(0, n);
    return;
  }
  const std::int64_t chunk = (n + workers - 1) / workers;
  std::vector<std::jthread> pool;
  pool.reserve(static_cast<std::size_t>(workers - 1));
  for (std::int64_t w = 1; w < workers; ++w) {
    const std::int64_t begin = w * chunk;
    const std::int64_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&fn, begin, end] { fn(begin, end); });
  }
  fn(0, std::min(n, chunk));
}

}  // namespace vivit
