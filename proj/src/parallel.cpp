#include "sdd/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <thread>
#include <vector>

namespace sdd {

namespace {
int g_threads = 1;
}

void set_thread_count(int n) { g_threads = std::max(1, n); }

int thread_count() { return g_threads; }

void parallel_for_blocked(size_t begin, size_t end, size_t block_size,
                          const std::function<void(size_t, size_t)>& fn) {
  if (end <= begin) return;
  if (block_size == 0) block_size = 1;
  size_t n_blocks = (end - begin + block_size - 1) / block_size;
  int workers = std::min<size_t>(g_threads, n_blocks);
  if (workers <= 1) {
    for (size_t b = 0; b < n_blocks; ++b) {
      size_t lo = begin + b * block_size;
      fn(lo, std::min(end, lo + block_size));
    }
    return;
  }
  std::atomic<size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      for (;;) {
        size_t b = next.fetch_add(1);
        if (b >= n_blocks) return;
        size_t lo = begin + b * block_size;
        fn(lo, std::min(end, lo + block_size));
      }
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace sdd
