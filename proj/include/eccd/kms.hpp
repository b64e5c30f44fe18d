#pragma once

// Kac-Murdock-Szego correlation matrices R_rho (entries rho^|i-j|) and the
// 2D covariance Sigma = V (R_rho_v (x) R_rho_h) V over an H x W pixel grid.
//
// Nothing here materialises an n x n or HW x HW matrix. R_rho^{-1} is
// tridiagonal,
//
//   R_rho^{-1} = 1/(1 - rho^2) * tridiag(-rho; [1, 1+rho^2, ..., 1+rho^2, 1]; -rho),
//
// and det R_rho = (1 - rho^2)^(n-1), so the precision of Sigma is applied as
// a horizontal tridiagonal pass along every row followed by a vertical pass
// across rows, both wrapped in the diagonal scaling V^{-1}.
//
// Pixel (i, j) is flat index i * width + j everywhere in the library.

#include <cstddef>
#include <span>
#include <vector>

#include "eccd/simd/kernels.hpp"

namespace eccd {

/// Largest |rho| accepted by operator construction; 1/(1 - rho^2) explodes
/// beyond this.
inline constexpr double kMaxAbsRho = 0.999;

class KmsOperator {
 public:
  /// Throws std::domain_error unless n >= 1 and |rho| <= kMaxAbsRho.
  KmsOperator(std::size_t n, double rho);

  std::size_t size() const { return n_; }
  double rho() const { return rho_; }

  double entry(std::size_t i, std::size_t j) const;
  /// Diagonal of R^{-1}; length n.
  std::vector<double> precision_diagonal() const;
  double precision_diagonal_at(std::size_t i) const;
  double logdet() const;
  simd::TridiagCoeffs coeffs() const;

 private:
  std::size_t n_;
  double rho_;
};

/// log det R_rho = (n - 1) log(1 - rho^2). Throws std::domain_error if
/// |rho| >= 1 or n == 0.
double kms_logdet(std::size_t n, double rho);

class KroneckerKmsOperator {
 public:
  /// `scale` holds sigma per pixel (the diagonal of V), row-major, length
  /// height * width, all entries > 0. Throws std::domain_error on invalid rho
  /// or scale, std::invalid_argument on a length mismatch.
  KroneckerKmsOperator(std::size_t height, std::size_t width, double rho_v,
                       double rho_h, std::vector<double> scale);
  /// Spatially constant sigma.
  KroneckerKmsOperator(std::size_t height, std::size_t width, double rho_v,
                       double rho_h, double sigma);

  std::size_t height() const { return rows_.size(); }
  std::size_t width() const { return cols_.size(); }
  std::size_t size() const { return scale_.size(); }
  double rho_v() const { return rows_.rho(); }
  double rho_h() const { return cols_.rho(); }
  std::span<const double> scale() const { return scale_; }

  /// Entry of the dense covariance; for tests and diagnostics.
  double covariance_entry(std::size_t a, std::size_t b) const;

 private:
  friend double kron_logdet(const KroneckerKmsOperator&);
  friend void precision_apply(const KroneckerKmsOperator&,
                              std::span<const double>, std::span<double>,
                              const simd::KernelTable&);
  friend std::vector<double> precision_diagonal(const KroneckerKmsOperator&);

  KmsOperator rows_;  // vertical factor, size H
  KmsOperator cols_;  // horizontal factor, size W
  std::vector<double> scale_;
  std::vector<double> inv_scale_;
};

/// 2 sum log sigma_i + W (H - 1) log(1 - rho_v^2) + H (W - 1) log(1 - rho_h^2).
double kron_logdet(const KroneckerKmsOperator& op);

/// out = Sigma^{-1} v in O(HW). out must not alias v.
void precision_apply(const KroneckerKmsOperator& op, std::span<const double> v,
                     std::span<double> out,
                     const simd::KernelTable& k = simd::kernels());
std::vector<double> precision_apply(const KroneckerKmsOperator& op,
                                    std::span<const double> v);

/// d^T Sigma^{-1} d.
double quadratic_form(const KroneckerKmsOperator& op, std::span<const double> d,
                      const simd::KernelTable& k = simd::kernels());

/// [Sigma^{-1}]_{ii} = d_v(row) d_h(col) / sigma_i^2.
std::vector<double> precision_diagonal(const KroneckerKmsOperator& op);

}  // namespace eccd
