#include "eccd/kms.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "eccd/numerics.hpp"

namespace eccd {

namespace {

void check_rho(double rho) {
  if (!(std::abs(rho) <= kMaxAbsRho))
    throw std::domain_error("KMS correlation rho=" + std::to_string(rho) +
                            " outside [-0.999, 0.999]");
}

}  // namespace

KmsOperator::KmsOperator(std::size_t n, double rho) : n_(n), rho_(rho) {
  if (n == 0) throw std::domain_error("KMS dimension must be positive");
  check_rho(rho);
}

double KmsOperator::entry(std::size_t i, std::size_t j) const {
  const std::size_t d = i > j ? i - j : j - i;
  return std::pow(rho_, static_cast<double>(d));
}

double KmsOperator::precision_diagonal_at(std::size_t i) const {
  if (n_ == 1) return 1.0;
  const double s = 1.0 / (1.0 - rho_ * rho_);
  if (i == 0 || i + 1 == n_) return s;
  return s * (1.0 + rho_ * rho_);
}

std::vector<double> KmsOperator::precision_diagonal() const {
  std::vector<double> d(n_);
  for (std::size_t i = 0; i < n_; ++i) d[i] = precision_diagonal_at(i);
  return d;
}

double KmsOperator::logdet() const { return kms_logdet(n_, rho_); }

simd::TridiagCoeffs KmsOperator::coeffs() const {
  if (n_ == 1) return {1.0, 0.0, 1.0};
  return {1.0 / (1.0 - rho_ * rho_), rho_, 1.0 + rho_ * rho_};
}

double kms_logdet(std::size_t n, double rho) {
  if (n == 0) throw std::domain_error("kms_logdet: n must be positive");
  if (!(std::abs(rho) < 1.0))
    throw std::domain_error("kms_logdet: |rho| must be < 1");
  return static_cast<double>(n - 1) * std::log1p(-rho * rho);
}

KroneckerKmsOperator::KroneckerKmsOperator(std::size_t height,
                                           std::size_t width, double rho_v,
                                           double rho_h,
                                           std::vector<double> scale)
    : rows_(height, rho_v), cols_(width, rho_h), scale_(std::move(scale)) {
  if (scale_.size() != height * width)
    throw std::invalid_argument("KroneckerKmsOperator: scale has " +
                                std::to_string(scale_.size()) +
                                " entries, expected " +
                                std::to_string(height * width));
  inv_scale_.resize(scale_.size());
  for (std::size_t i = 0; i < scale_.size(); ++i) {
    if (!(scale_[i] > 0.0) || !std::isfinite(scale_[i]))
      throw std::domain_error("KroneckerKmsOperator: scale must be positive");
    inv_scale_[i] = 1.0 / scale_[i];
  }
}

KroneckerKmsOperator::KroneckerKmsOperator(std::size_t height,
                                           std::size_t width, double rho_v,
                                           double rho_h, double sigma)
    : KroneckerKmsOperator(height, width, rho_v, rho_h,
                           std::vector<double>(height * width, sigma)) {}

double KroneckerKmsOperator::covariance_entry(std::size_t a,
                                              std::size_t b) const {
  const std::size_t w = width();
  return scale_[a] * scale_[b] * rows_.entry(a / w, b / w) *
         cols_.entry(a % w, b % w);
}

double kron_logdet(const KroneckerKmsOperator& op) {
  std::vector<double> logs(op.size());
  for (std::size_t i = 0; i < logs.size(); ++i) logs[i] = std::log(op.scale_[i]);
  const double h = static_cast<double>(op.height());
  const double w = static_cast<double>(op.width());
  return 2.0 * pairwise_sum(logs) + w * op.rows_.logdet() + h * op.cols_.logdet();
}

void precision_apply(const KroneckerKmsOperator& op, std::span<const double> v,
                     std::span<double> out, const simd::KernelTable& k) {
  const std::size_t n = op.size();
  if (v.size() != n || out.size() != n)
    throw std::invalid_argument("precision_apply: vector length " +
                                std::to_string(v.size()) + " != " +
                                std::to_string(n));
  const std::size_t h = op.height();
  const std::size_t w = op.width();
  std::vector<double> scaled(n);
  std::vector<double> rows(n);
  k.mul(v.data(), op.inv_scale_.data(), scaled.data(), n);

  const simd::TridiagCoeffs ch = op.cols_.coeffs();
  for (std::size_t i = 0; i < h; ++i)
    k.tridiag_line(scaled.data() + i * w, rows.data() + i * w, w, ch);

  const simd::TridiagCoeffs cv = op.rows_.coeffs();
  for (std::size_t i = 0; i < h; ++i) {
    const double* prev = i > 0 ? rows.data() + (i - 1) * w : nullptr;
    const double* next = i + 1 < h ? rows.data() + (i + 1) * w : nullptr;
    const double diag = (prev && next) ? cv.mid : 1.0;
    k.tridiag_combine(prev, rows.data() + i * w, next, out.data() + i * w, w,
                      diag, cv);
  }
  k.mul(out.data(), op.inv_scale_.data(), out.data(), n);
}

std::vector<double> precision_apply(const KroneckerKmsOperator& op,
                                    std::span<const double> v) {
  std::vector<double> out(op.size());
  precision_apply(op, v, out);
  return out;
}

double quadratic_form(const KroneckerKmsOperator& op, std::span<const double> d,
                      const simd::KernelTable& k) {
  std::vector<double> pd(op.size());
  precision_apply(op, d, pd, k);
  return k.dot(d.data(), pd.data(), d.size());
}

std::vector<double> precision_diagonal(const KroneckerKmsOperator& op) {
  const std::size_t w = op.width();
  const std::vector<double> dv = op.rows_.precision_diagonal();
  const std::vector<double> dh = op.cols_.precision_diagonal();
  std::vector<double> out(op.size());
  for (std::size_t a = 0; a < out.size(); ++a)
    out[a] = dv[a / w] * dh[a % w] * op.inv_scale_[a] * op.inv_scale_[a];
  return out;
}

}  // namespace eccd
