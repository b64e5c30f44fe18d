#include <arm_neon.h>

#include "eccd/simd/kernels.hpp"

namespace eccd::simd::detail {

namespace {

double dot_neon(const double* x, const double* y, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = vaddq_f64(acc0, vmulq_f64(vld1q_f64(x + i), vld1q_f64(y + i)));
    acc1 = vaddq_f64(acc1, vmulq_f64(vld1q_f64(x + i + 2), vld1q_f64(y + i + 2)));
  }
  acc0 = vaddq_f64(acc0, acc1);
  double s = vgetq_lane_f64(acc0, 0) + vgetq_lane_f64(acc0, 1);
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy_neon(double alpha, const double* x, double* y, std::size_t n) {
  const float64x2_t a = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2)
    vst1q_f64(y + i, vaddq_f64(vld1q_f64(y + i), vmulq_f64(a, vld1q_f64(x + i))));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void mul_neon(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2)
    vst1q_f64(out + i, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void tridiag_line_neon(const double* x, double* out, std::size_t n,
                       TridiagCoeffs c) {
  if (n == 1) {
    out[0] = x[0];
    return;
  }
  out[0] = tridiag_first(x, c);
  const float64x2_t scale = vdupq_n_f64(c.scale);
  const float64x2_t rho = vdupq_n_f64(c.rho);
  const float64x2_t mid = vdupq_n_f64(c.mid);
  std::size_t j = 1;
  for (; j + 2 < n; j += 2) {
    const float64x2_t nb = vaddq_f64(vld1q_f64(x + j - 1), vld1q_f64(x + j + 1));
    const float64x2_t d =
        vsubq_f64(vmulq_f64(mid, vld1q_f64(x + j)), vmulq_f64(rho, nb));
    vst1q_f64(out + j, vmulq_f64(scale, d));
  }
  for (; j + 1 < n; ++j) out[j] = tridiag_mid(x, j, c);
  out[n - 1] = tridiag_last(x, n, c);
}

void tridiag_combine_neon(const double* prev, const double* cur,
                          const double* next, double* out, std::size_t n,
                          double diag, TridiagCoeffs c) {
  const float64x2_t scale = vdupq_n_f64(c.scale);
  const float64x2_t rho = vdupq_n_f64(c.rho);
  const float64x2_t dg = vdupq_n_f64(diag);
  std::size_t j = 0;
  if (prev && next) {
    for (; j + 2 <= n; j += 2) {
      const float64x2_t nb = vaddq_f64(vld1q_f64(prev + j), vld1q_f64(next + j));
      const float64x2_t d =
          vsubq_f64(vmulq_f64(dg, vld1q_f64(cur + j)), vmulq_f64(rho, nb));
      vst1q_f64(out + j, vmulq_f64(scale, d));
    }
    for (; j < n; ++j)
      out[j] = c.scale * (diag * cur[j] - c.rho * (prev[j] + next[j]));
  } else if (prev || next) {
    const double* nbp = prev ? prev : next;
    for (; j + 2 <= n; j += 2) {
      const float64x2_t d = vsubq_f64(vmulq_f64(dg, vld1q_f64(cur + j)),
                                      vmulq_f64(rho, vld1q_f64(nbp + j)));
      vst1q_f64(out + j, vmulq_f64(scale, d));
    }
    for (; j < n; ++j) out[j] = c.scale * (diag * cur[j] - c.rho * nbp[j]);
  } else {
    for (; j + 2 <= n; j += 2)
      vst1q_f64(out + j, vmulq_f64(scale, vmulq_f64(dg, vld1q_f64(cur + j))));
    for (; j < n; ++j) out[j] = c.scale * (diag * cur[j]);
  }
}

}  // namespace

KernelTable neon_table() {
  return {Isa::neon,          dot_neon,
          axpy_neon,          mul_neon,
          tridiag_line_neon,  tridiag_combine_neon};
}

}  // namespace eccd::simd::detail
