// Compiled with -mavx2 -mfma. Nothing in here may run unless avx2_table()
// confirmed CPU support first.

#include <immintrin.h>

#include "textfuse/kernels.hpp"

namespace textfuse::kernels {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d shuf = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, shuf));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  __m256d acc2 = _mm256_setzero_pd();
  __m256d acc3 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
    acc2 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 8), _mm256_loadu_pd(b + i + 8), acc2);
    acc3 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 12), _mm256_loadu_pd(b + i + 12), acc3);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  }
  double acc = hsum(_mm256_add_pd(_mm256_add_pd(acc0, acc1), _mm256_add_pd(acc2, acc3)));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    _mm256_storeu_pd(y + i + 4,
                     _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4)));
  }
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void hadamard_avx2(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i),
                                              _mm256_loadu_pd(out + i)));
  }
  for (; i < n; ++i) out[i] += a[i] * b[i];
}

// crow[0..n) += a0*b0 + a1*b1 + a2*b2 + a3*b3, one pass over crow.
inline void axpy4(const double* coef, const double* b0, const double* b1, const double* b2,
                  const double* b3, double* crow, std::size_t n) {
  const __m256d c0 = _mm256_set1_pd(coef[0]);
  const __m256d c1 = _mm256_set1_pd(coef[1]);
  const __m256d c2 = _mm256_set1_pd(coef[2]);
  const __m256d c3 = _mm256_set1_pd(coef[3]);
  std::size_t j = 0;
  for (; j + 4 <= n; j += 4) {
    __m256d acc = _mm256_loadu_pd(crow + j);
    acc = _mm256_fmadd_pd(c0, _mm256_loadu_pd(b0 + j), acc);
    acc = _mm256_fmadd_pd(c1, _mm256_loadu_pd(b1 + j), acc);
    acc = _mm256_fmadd_pd(c2, _mm256_loadu_pd(b2 + j), acc);
    acc = _mm256_fmadd_pd(c3, _mm256_loadu_pd(b3 + j), acc);
    _mm256_storeu_pd(crow + j, acc);
  }
  for (; j < n; ++j) {
    crow[j] += coef[0] * b0[j] + coef[1] * b1[j] + coef[2] * b2[j] + coef[3] * b3[j];
  }
}

void gemm_nn_avx2(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
                  double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    std::size_t p = 0;
    for (; p + 4 <= k; p += 4) {
      if (arow[p] == 0.0 && arow[p + 1] == 0.0 && arow[p + 2] == 0.0 && arow[p + 3] == 0.0) {
        continue;
      }
      axpy4(arow + p, b + p * n, b + (p + 1) * n, b + (p + 2) * n, b + (p + 3) * n, crow, n);
    }
    for (; p < k; ++p) {
      if (arow[p] != 0.0) axpy_avx2(arow[p], b + p * n, crow, n);
    }
  }
}

void gemm_nt_avx2(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
                  double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    std::size_t j = 0;
    // Four output columns per pass so each load of the A row is reused.
    for (; j + 4 <= n; j += 4) {
      const double* b0 = b + j * k;
      const double* b1 = b0 + k;
      const double* b2 = b1 + k;
      const double* b3 = b2 + k;
      __m256d s0 = _mm256_setzero_pd();
      __m256d s1 = _mm256_setzero_pd();
      __m256d s2 = _mm256_setzero_pd();
      __m256d s3 = _mm256_setzero_pd();
      std::size_t p = 0;
      for (; p + 4 <= k; p += 4) {
        const __m256d av = _mm256_loadu_pd(arow + p);
        s0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b0 + p), s0);
        s1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b1 + p), s1);
        s2 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b2 + p), s2);
        s3 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b3 + p), s3);
      }
      double r0 = hsum(s0), r1 = hsum(s1), r2 = hsum(s2), r3 = hsum(s3);
      for (; p < k; ++p) {
        r0 += arow[p] * b0[p];
        r1 += arow[p] * b1[p];
        r2 += arow[p] * b2[p];
        r3 += arow[p] * b3[p];
      }
      crow[j] += r0;
      crow[j + 1] += r1;
      crow[j + 2] += r2;
      crow[j + 3] += r3;
    }
    for (; j < n; ++j) crow[j] += dot_avx2(arow, b + j * k, k);
  }
}

void gemm_tn_avx2(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
                  double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      if (arow[p] != 0.0) axpy_avx2(arow[p], brow, c + p * n, n);
    }
  }
}

}  // namespace

const KernelTable* avx2_table() {
  static const KernelTable table{Backend::avx2, dot_avx2,     axpy_avx2,   hadamard_avx2,
                                 gemm_nn_avx2,  gemm_nt_avx2, gemm_tn_avx2};
  static const bool supported = [] {
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  }();
  return supported ? &table : nullptr;
}

}  // namespace textfuse::kernels
