#pragma once

#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace egocurate {

// Worker count: --workers flag wins, then EGOCURATE_WORKERS, then hardware.
// Workers only ever split index ranges whose slots are written independently,
// so results are identical for any count.
inline int& worker_count_override() {
  static int v = 0;
  return v;
}

inline int worker_count() {
  if (worker_count_override() > 0) return worker_count_override();
  if (const char* env = std::getenv("EGOCURATE_WORKERS")) {
    int n = std::atoi(env);
    if (n > 0) return n;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

template <class F>
void parallel_for(std::size_t n, F&& fn) {
  const std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(worker_count()), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = n * w / workers;
    const std::size_t end = n * (w + 1) / workers;
    threads.emplace_back([begin, end, &fn] {
      for (std::size_t i = begin; i < end; ++i) fn(i);
    });
  }
  for (auto& t : threads) t.join();
}

}  // namespace egocurate
