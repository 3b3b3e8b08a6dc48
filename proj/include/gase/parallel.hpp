#pragma once

#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace gase {

// Number of workers: GASE_WORKERS env var if set, else hardware threads.
inline int default_workers() {
  if (const char* env = std::getenv("GASE_WORKERS")) {
    int w = std::atoi(env);
    if (w > 0) return w;
  }
  unsigned hc = std::thread::hardware_concurrency();
  return hc > 0 ? static_cast<int>(hc) : 1;
}

// Static contiguous partition of [0, n) over `workers` threads. The chunk
// boundaries depend only on (n, workers), so per-worker accumulations can be
// merged in worker order for reproducible results.
inline void parallel_chunks(
    int n, int workers,
    const std::function<void(int worker, int begin, int end)>& fn) {
  if (workers < 1) workers = 1;
  if (workers > n) workers = n > 0 ? n : 1;
  if (workers == 1) {
    fn(0, 0, n);
    return;
  }
  std::vector<std::thread> threads;
  threads.reserve(workers);
  int base = n / workers, rem = n % workers;
  int begin = 0;
  for (int w = 0; w < workers; ++w) {
    int len = base + (w < rem ? 1 : 0);
    int end = begin + len;
    threads.emplace_back([&fn, w, begin, end] { fn(w, begin, end); });
    begin = end;
  }
  for (auto& t : threads) t.join();
}

}  // namespace gase
