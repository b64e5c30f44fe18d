#include "eccd/simd/kernels.hpp"

namespace eccd::simd::detail {

namespace {

double dot_scalar(const double* x, const double* y, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void mul_scalar(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void tridiag_line_scalar(const double* x, double* out, std::size_t n,
                         TridiagCoeffs c) {
  if (n == 1) {
    out[0] = x[0];
    return;
  }
  out[0] = tridiag_first(x, c);
  for (std::size_t j = 1; j + 1 < n; ++j) out[j] = tridiag_mid(x, j, c);
  out[n - 1] = tridiag_last(x, n, c);
}

void tridiag_combine_scalar(const double* prev, const double* cur,
                            const double* next, double* out, std::size_t n,
                            double diag, TridiagCoeffs c) {
  if (prev && next) {
    for (std::size_t j = 0; j < n; ++j)
      out[j] = c.scale * (diag * cur[j] - c.rho * (prev[j] + next[j]));
  } else if (prev || next) {
    const double* nb = prev ? prev : next;
    for (std::size_t j = 0; j < n; ++j)
      out[j] = c.scale * (diag * cur[j] - c.rho * nb[j]);
  } else {
    for (std::size_t j = 0; j < n; ++j) out[j] = c.scale * (diag * cur[j]);
  }
}

}  // namespace

KernelTable scalar_table() {
  return {Isa::scalar,          dot_scalar,
          axpy_scalar,          mul_scalar,
          tridiag_line_scalar,  tridiag_combine_scalar};
}

}  // namespace eccd::simd::detail
