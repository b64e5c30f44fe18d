#pragma once

// Gaussian prior p(eta) = N(mu, Sigma) and mean-field posterior
// q(eta) = N(m, diag(gamma^2)) over the per-pixel label-error logit field.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "eccd/kms.hpp"

namespace eccd {

struct LatentFieldPrior {
  std::vector<double> mu;
  KroneckerKmsOperator cov;

  /// Spatially constant mean and scale.
  static LatentFieldPrior uniform(std::size_t height, std::size_t width,
                                  double mu, double sigma, double rho_v,
                                  double rho_h);

  std::size_t height() const { return cov.height(); }
  std::size_t width() const { return cov.width(); }
  std::size_t size() const { return mu.size(); }
};

struct PixelMarginal {
  double mean;
  double std;
};

/// One instance per training image. gamma_i = exp(log_gamma_i).
struct LatentFieldPosterior {
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::vector<double> m;
  std::vector<double> log_gamma;

  static LatentFieldPosterior uniform(std::size_t height, std::size_t width,
                                      double m0, double gamma0);

  std::size_t size() const { return m.size(); }
  double gamma(std::size_t i) const;

  bool operator==(const LatentFieldPosterior&) const = default;
};

/// KL[q || p] in O(HW):
///   0.5 [log|Sigma| - log|Gamma| - HW + tr(Sigma^{-1} Gamma)
///        + (m - mu)^T Sigma^{-1} (m - mu)].
/// Throws std::invalid_argument on a dimension mismatch.
double kl_divergence(const LatentFieldPosterior& q, const LatentFieldPrior& p);

/// Gradients of kl_divergence:
///   dKL/dm = Sigma^{-1}(m - mu),  dKL/dlog_gamma_i = gamma_i^2 [Sigma^{-1}]_ii - 1.
struct KlGradient {
  std::vector<double> d_m;
  std::vector<double> d_log_gamma;
};
KlGradient kl_gradient(const LatentFieldPosterior& q, const LatentFieldPrior& p);

/// (m_i, gamma_i); exact since Gamma is diagonal. Throws std::out_of_range.
PixelMarginal marginal(const LatentFieldPosterior& q, std::size_t i);

/// sigmoid(m_i) per pixel.
std::vector<double> error_probability_map(const LatentFieldPosterior& q);

// Checkpoint format: "ECCDPOST1", H and W as u32 LE, then m and log_gamma as
// HW f64 LE each.
void save_posterior(const LatentFieldPosterior& q,
                    const std::filesystem::path& path);
LatentFieldPosterior load_posterior(const std::filesystem::path& path);

}  // namespace eccd
