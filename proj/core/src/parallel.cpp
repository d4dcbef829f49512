#include "blindspot/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "blindspot/errors.hpp"

namespace blindspot {

std::size_t configured_threads() {
  const char* env = std::getenv("DENOISE_THREADS");
  if (!env || !*env) return std::max(1u, std::thread::hardware_concurrency());
  const std::string s(env);
  if (s.find_first_not_of("0123456789") != std::string::npos || s.size() > 6) {
    throw ConfigError("DENOISE_THREADS must be a non-negative integer, got '" + s + "'");
  }
  return std::max<std::size_t>(1, std::stoul(s));
}

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  threads = std::min(std::max<std::size_t>(threads, 1), n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = n;
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t + 1 < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace blindspot
