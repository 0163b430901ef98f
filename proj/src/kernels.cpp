#include "textfuse/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

namespace textfuse::kernels {

#ifndef TEXTFUSE_HAVE_AVX2
const KernelTable* avx2_table() { return nullptr; }
#endif

namespace {

const KernelTable* initial_table() {
  const char* env = std::getenv("TEXTFUSE_SIMD");
  const std::string choice = env != nullptr ? env : "auto";
  if (choice == "scalar") return &scalar_table();
  if (const KernelTable* fast = avx2_table()) return fast;
  return &scalar_table();
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{initial_table()};
  return table;
}

}  // namespace

const KernelTable& active() { return *current().load(std::memory_order_relaxed); }

bool backend_available(Backend backend) {
  return backend == Backend::scalar || avx2_table() != nullptr;
}

void set_backend(Backend backend) {
  if (backend == Backend::avx2) {
    if (const KernelTable* fast = avx2_table()) {
      current().store(fast);
      return;
    }
  }
  current().store(&scalar_table());
}

std::string_view backend_name(Backend backend) {
  return backend == Backend::avx2 ? "avx2" : "scalar";
}

ScopedBackend::ScopedBackend(Backend backend) : previous_(&active()) { set_backend(backend); }

ScopedBackend::~ScopedBackend() { current().store(previous_); }

}  // namespace textfuse::kernels
