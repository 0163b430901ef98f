#pragma once

// Dense inner-loop kernels used by the tensor engine.
//
// Every kernel has a portable scalar reference implementation. On x86-64 an
// AVX2/FMA variant is compiled in a separate translation unit and selected at
// runtime when the CPU supports it. The environment variable TEXTFUSE_SIMD
// (values: auto, scalar, avx2) overrides the choice at startup; tests switch
// backends explicitly with set_backend().
//
// All matrices are row-major and kernels accumulate into their output.

#include <cstddef>
#include <string_view>

namespace textfuse::kernels {

enum class Backend { scalar, avx2 };

struct KernelTable {
  Backend backend;
  // sum_i a[i] * b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y[i] += alpha * x[i]
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // out[i] += a[i] * b[i]
  void (*hadamard)(const double* a, const double* b, double* out, std::size_t n);
  // C[m x n] += A[m x k] * B[k x n]
  void (*gemm_nn)(std::size_t m, std::size_t k, std::size_t n, const double* a,
                  const double* b, double* c);
  // C[m x n] += A[m x k] * B[n x k]^T
  void (*gemm_nt)(std::size_t m, std::size_t k, std::size_t n, const double* a,
                  const double* b, double* c);
  // C[k x n] += A[m x k]^T * B[m x n]
  void (*gemm_tn)(std::size_t m, std::size_t k, std::size_t n, const double* a,
                  const double* b, double* c);
};

const KernelTable& scalar_table();
// Null when the AVX2 variant was not compiled in or the CPU lacks AVX2/FMA.
const KernelTable* avx2_table();

const KernelTable& active();
void set_backend(Backend backend);
bool backend_available(Backend backend);
std::string_view backend_name(Backend backend);

// Restores the previously active backend on destruction.
class ScopedBackend {
 public:
  explicit ScopedBackend(Backend backend);
  ~ScopedBackend();
  ScopedBackend(const ScopedBackend&) = delete;
  ScopedBackend& operator=(const ScopedBackend&) = delete;

 private:
  const KernelTable* previous_;
};

}  // namespace textfuse::kernels
