#include "spex/parallel.hpp"

#include <mutex>

namespace spex {

namespace {
int g_thread_cap = 0;
std::once_flag g_env_once;
}  // namespace

int thread_cap() {
  std::call_once(g_env_once, [] {
    if (const char* env = std::getenv("SPEX_THREADS")) {
      g_thread_cap = std::max(0, std::atoi(env));
    }
  });
  return g_thread_cap;
}

void set_thread_cap(int n) {
  thread_cap();  // ensure env read first so CLI wins afterwards
  g_thread_cap = n < 0 ? 0 : n;
}

}  // namespace spex
