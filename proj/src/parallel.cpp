#include "ctorecon/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace ctorecon {

namespace {

std::size_t initial_threads() {
  if (const char* env = std::getenv("CTO_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) return static_cast<std::size_t>(v);
    } catch (...) {
    }
  }
  return 1;
}

std::atomic<std::size_t>& threads_setting() {
  static std::atomic<std::size_t> n{initial_threads()};
  return n;
}

}  // namespace

std::size_t thread_count() { return threads_setting().load(); }

void set_thread_count(std::size_t n) { threads_setting().store(std::max<std::size_t>(1, n)); }

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body) {
  const std::size_t workers = std::min(thread_count(), n);
  if (workers <= 1) {
    if (n > 0) body(0, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&body, begin, end] { body(begin, end); });
  }
  for (auto& t : pool) t.join();
}

}  // namespace ctorecon
