#include "o2f/parallel.hpp"

#include <omp.h>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <string>

namespace o2f {

namespace {

std::atomic<int> g_override{0};

int env_budget() {
  int threads = omp_get_max_threads();
  if (const char* env = std::getenv("O2F_THREADS")) {
    try {
      const int cap = std::stoi(env);
      if (cap >= 1) threads = std::min(threads, cap);
    } catch (const std::exception&) {
      // Malformed values are ignored.
    }
  }
  return std::max(threads, 1);
}

}  // namespace

int thread_budget() {
  const int forced = g_override.load(std::memory_order_relaxed);
  return forced >= 1 ? forced : env_budget();
}

void set_thread_budget(int threads) { g_override.store(threads, std::memory_order_relaxed); }

}  // namespace o2f
