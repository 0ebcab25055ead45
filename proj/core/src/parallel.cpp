#include "dsppnet/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <stdexcept>
#include <thread>
#include <vector>

namespace dsppnet {

namespace {
std::atomic<int> g_threads{0};

int resolve_threads() {
  const int configured = g_threads.load(std::memory_order_relaxed);
  if (configured > 0) return configured;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}
}  // namespace

void set_thread_count(int n) {
  if (n < 0) {
    throw std::invalid_argument("set_thread_count requires n >= 0");
  }
  g_threads.store(n, std::memory_order_relaxed);
}

int thread_count() { return resolve_threads(); }

void parallel_for(std::int64_t begin, std::int64_t end,
                  const std::function<void(std::int64_t, std::int64_t)>& chunk) {
  if (begin >= end) return;
  const std::int64_t range = end - begin;
  const int workers =
      static_cast<int>(std::min<std::int64_t>(resolve_threads(), range));
  if (workers <= 1) {
    chunk(begin, end);
    return;
  }

  // Contiguous slices; worker i gets [begin + i*step, ...), last one the rest.
  const std::int64_t step = (range + workers - 1) / workers;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  for (int i = 0; i < workers; ++i) {
    const std::int64_t lo = begin + step * i;
    const std::int64_t hi = std::min(end, lo + step);
    if (lo >= hi) break;
    pool.emplace_back([&, lo, hi] {
      try {
        chunk(lo, hi);
      } catch (...) {
        bool expected = false;
        if (failed.compare_exchange_strong(expected, true)) {
          failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace dsppnet
