#include "driftnet/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace driftnet {

namespace {

std::atomic<std::size_t> g_override{0};
thread_local bool t_inside_parallel = false;

std::size_t env_threads() {
  if (const char* v = std::getenv("DRIFTNET_THREADS")) {
    try {
      auto n = std::stoul(v);
      if (n > 0) return n;
    } catch (const std::exception&) {
    }
  }
  auto hw = std::thread::hardware_concurrency();
  return hw ? hw : 1;
}

}  // namespace

std::size_t thread_count() {
  auto o = g_override.load();
  return o ? o : env_threads();
}

void set_thread_count(std::size_t n) { g_override.store(n); }

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
  // Nested calls run inline so the worker count stays bounded.
  std::size_t workers = t_inside_parallel ? 1 : std::min(thread_count(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&] {
    t_inside_parallel = true;
    while (true) {
      auto i = next.fetch_add(1);
      if (i >= n) break;
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        next.store(n);
      }
    }
    t_inside_parallel = false;
  };
  std::vector<std::jthread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  pool.clear();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace driftnet
