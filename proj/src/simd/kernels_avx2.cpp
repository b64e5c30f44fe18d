// Compiled with -mavx2 (no -mfma); only reached after a runtime CPU check.
#include <immintrin.h>

#include "eccd/simd/kernels.hpp"

namespace eccd::simd::detail {

namespace {

double dot_avx2(const double* x, const double* y, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_add_pd(acc0, _mm256_mul_pd(_mm256_loadu_pd(x + i),
                                             _mm256_loadu_pd(y + i)));
    acc1 = _mm256_add_pd(acc1, _mm256_mul_pd(_mm256_loadu_pd(x + i + 4),
                                             _mm256_loadu_pd(y + i + 4)));
  }
  for (; i + 4 <= n; i += 4)
    acc0 = _mm256_add_pd(acc0, _mm256_mul_pd(_mm256_loadu_pd(x + i),
                                             _mm256_loadu_pd(y + i)));
  acc0 = _mm256_add_pd(acc0, acc1);
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, acc0);
  double s = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d a = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_add_pd(_mm256_loadu_pd(y + i),
                                    _mm256_mul_pd(a, _mm256_loadu_pd(x + i)));
    _mm256_storeu_pd(y + i, v);
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void mul_avx2(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i),
                                            _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void tridiag_line_avx2(const double* x, double* out, std::size_t n,
                       TridiagCoeffs c) {
  if (n == 1) {
    out[0] = x[0];
    return;
  }
  out[0] = tridiag_first(x, c);
  const __m256d scale = _mm256_set1_pd(c.scale);
  const __m256d rho = _mm256_set1_pd(c.rho);
  const __m256d mid = _mm256_set1_pd(c.mid);
  std::size_t j = 1;
  for (; j + 4 < n; j += 4) {
    const __m256d nb = _mm256_add_pd(_mm256_loadu_pd(x + j - 1),
                                     _mm256_loadu_pd(x + j + 1));
    const __m256d d = _mm256_sub_pd(_mm256_mul_pd(mid, _mm256_loadu_pd(x + j)),
                                    _mm256_mul_pd(rho, nb));
    _mm256_storeu_pd(out + j, _mm256_mul_pd(scale, d));
  }
  for (; j + 1 < n; ++j) out[j] = tridiag_mid(x, j, c);
  out[n - 1] = tridiag_last(x, n, c);
}

void tridiag_combine_avx2(const double* prev, const double* cur,
                          const double* next, double* out, std::size_t n,
                          double diag, TridiagCoeffs c) {
  const __m256d scale = _mm256_set1_pd(c.scale);
  const __m256d rho = _mm256_set1_pd(c.rho);
  const __m256d dg = _mm256_set1_pd(diag);
  std::size_t j = 0;
  if (prev && next) {
    for (; j + 4 <= n; j += 4) {
      const __m256d nb = _mm256_add_pd(_mm256_loadu_pd(prev + j),
                                       _mm256_loadu_pd(next + j));
      const __m256d d = _mm256_sub_pd(
          _mm256_mul_pd(dg, _mm256_loadu_pd(cur + j)), _mm256_mul_pd(rho, nb));
      _mm256_storeu_pd(out + j, _mm256_mul_pd(scale, d));
    }
    for (; j < n; ++j)
      out[j] = c.scale * (diag * cur[j] - c.rho * (prev[j] + next[j]));
  } else if (prev || next) {
    const double* nbp = prev ? prev : next;
    for (; j + 4 <= n; j += 4) {
      const __m256d d =
          _mm256_sub_pd(_mm256_mul_pd(dg, _mm256_loadu_pd(cur + j)),
                        _mm256_mul_pd(rho, _mm256_loadu_pd(nbp + j)));
      _mm256_storeu_pd(out + j, _mm256_mul_pd(scale, d));
    }
    for (; j < n; ++j) out[j] = c.scale * (diag * cur[j] - c.rho * nbp[j]);
  } else {
    for (; j + 4 <= n; j += 4)
      _mm256_storeu_pd(out + j,
                       _mm256_mul_pd(scale, _mm256_mul_pd(dg, _mm256_loadu_pd(cur + j))));
    for (; j < n; ++j) out[j] = c.scale * (diag * cur[j]);
  }
}

}  // namespace

KernelTable avx2_table() {
  return {Isa::avx2,          dot_avx2,
          axpy_avx2,          mul_avx2,
          tridiag_line_avx2,  tridiag_combine_avx2};
}

}  // namespace eccd::simd::detail
