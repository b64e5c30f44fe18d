#pragma once

// Data-parallel inner loops behind the structured linear algebra and the
// patch classifier. Each instruction set provides the same table of kernels;
// the scalar table is the reference every other variant is tested against.
//
// Element-wise kernels (mul, axpy, tridiag_line, tridiag_combine) evaluate
// the same expression tree in every variant without fused multiply-add, so
// their results are bitwise identical across variants. Reductions (dot)
// reassociate and agree only to rounding.

#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

namespace eccd::simd {

enum class Isa { scalar, avx2, neon };

/// Coefficients of one KMS precision factor R_rho^{-1}:
///   scale * tridiag(-rho; [1, 1 + rho^2, ..., 1 + rho^2, 1]; -rho).
struct TridiagCoeffs {
  double scale = 1.0;  // 1 / (1 - rho^2)
  double rho = 0.0;
  double mid = 1.0;  // 1 + rho^2
};

struct KernelTable {
  Isa isa;
  /// sum_i x[i] * y[i]
  double (*dot)(const double* x, const double* y, std::size_t n);
  /// y[i] += alpha * x[i]
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  /// out[i] = a[i] * b[i]; out may alias a or b.
  void (*mul)(const double* a, const double* b, double* out, std::size_t n);
  /// out = R^{-1} x along one contiguous line of length n; out must not alias x.
  void (*tridiag_line)(const double* x, double* out, std::size_t n,
                       TridiagCoeffs c);
  /// One row of R^{-1} applied across lines:
  ///   out[j] = scale * (diag * cur[j] - rho * (prev[j] + next[j])).
  /// prev or next may be null (boundary rows), in which case that neighbour
  /// is dropped from the sum.
  void (*tridiag_combine)(const double* prev, const double* cur,
                          const double* next, double* out, std::size_t n,
                          double diag, TridiagCoeffs c);
};

/// Kernel table selected at first use: the widest ISA supported by both the
/// build and the running CPU, unless ECCD_SIMD=scalar|avx2|neon overrides it.
const KernelTable& kernels();

/// Table for a specific ISA, or nullopt if the build or CPU lacks it.
std::optional<KernelTable> kernels_for(Isa isa);

/// Every ISA usable on this machine, scalar first.
std::vector<Isa> available_isas();

std::string_view isa_name(Isa isa);

namespace detail {
KernelTable scalar_table();
#if defined(ECCD_HAVE_AVX2)
KernelTable avx2_table();
#endif
#if defined(ECCD_HAVE_NEON)
KernelTable neon_table();
#endif

// Boundary entries of tridiag_line, shared so every variant rounds the same.
inline double tridiag_first(const double* x, TridiagCoeffs c) {
  return c.scale * (x[0] - c.rho * x[1]);
}
inline double tridiag_last(const double* x, std::size_t n, TridiagCoeffs c) {
  return c.scale * (x[n - 1] - c.rho * x[n - 2]);
}
inline double tridiag_mid(const double* x, std::size_t j, TridiagCoeffs c) {
  return c.scale * (c.mid * x[j] - c.rho * (x[j - 1] + x[j + 1]));
}
}  // namespace detail

}  // namespace eccd::simd
