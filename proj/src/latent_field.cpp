#include "eccd/latent_field.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "eccd/binary_io.hpp"
#include "eccd/numerics.hpp"

namespace eccd {

namespace {

constexpr std::string_view kPosteriorMagic = "ECCDPOST1";

void check_dims(const LatentFieldPosterior& q, const LatentFieldPrior& p) {
  if (q.m.size() != p.size() || q.log_gamma.size() != p.size() ||
      p.cov.size() != p.size() || q.height != p.height() || q.width != p.width())
    throw std::invalid_argument(
        "latent field dimension mismatch: posterior " + std::to_string(q.height) +
        "x" + std::to_string(q.width) + " vs prior " +
        std::to_string(p.height()) + "x" + std::to_string(p.width()));
}

}  // namespace

LatentFieldPrior LatentFieldPrior::uniform(std::size_t height, std::size_t width,
                                           double mu, double sigma, double rho_v,
                                           double rho_h) {
  return LatentFieldPrior{std::vector<double>(height * width, mu),
                          KroneckerKmsOperator(height, width, rho_v, rho_h, sigma)};
}

LatentFieldPosterior LatentFieldPosterior::uniform(std::size_t height,
                                                   std::size_t width, double m0,
                                                   double gamma0) {
  if (!(gamma0 > 0.0)) throw std::domain_error("posterior gamma must be positive");
  return LatentFieldPosterior{static_cast<std::uint32_t>(height),
                              static_cast<std::uint32_t>(width),
                              std::vector<double>(height * width, m0),
                              std::vector<double>(height * width, std::log(gamma0))};
}

double LatentFieldPosterior::gamma(std::size_t i) const {
  return std::exp(log_gamma[i]);
}

double kl_divergence(const LatentFieldPosterior& q, const LatentFieldPrior& p) {
  check_dims(q, p);
  const std::size_t n = p.size();
  const std::vector<double> pdiag = precision_diagonal(p.cov);

  std::vector<double> diff(n);
  std::vector<double> trace_terms(n);
  for (std::size_t i = 0; i < n; ++i) {
    diff[i] = q.m[i] - p.mu[i];
    // gamma^2 Sigma^{-1}_ii - 2 log gamma, folded per pixel.
    trace_terms[i] = std::exp(2.0 * q.log_gamma[i]) * pdiag[i] - 2.0 * q.log_gamma[i];
  }
  const double quad = quadratic_form(p.cov, diff);
  return 0.5 * (kron_logdet(p.cov) - static_cast<double>(n) +
                pairwise_sum(trace_terms) + quad);
}

KlGradient kl_gradient(const LatentFieldPosterior& q, const LatentFieldPrior& p) {
  check_dims(q, p);
  const std::size_t n = p.size();
  std::vector<double> diff(n);
  for (std::size_t i = 0; i < n; ++i) diff[i] = q.m[i] - p.mu[i];
  KlGradient g{precision_apply(p.cov, diff), std::vector<double>(n)};
  const std::vector<double> pdiag = precision_diagonal(p.cov);
  for (std::size_t i = 0; i < n; ++i)
    g.d_log_gamma[i] = std::exp(2.0 * q.log_gamma[i]) * pdiag[i] - 1.0;
  return g;
}

PixelMarginal marginal(const LatentFieldPosterior& q, std::size_t i) {
  if (i >= q.size())
    throw std::out_of_range("pixel index " + std::to_string(i) +
                            " out of range for field of size " +
                            std::to_string(q.size()));
  return {q.m[i], q.gamma(i)};
}

std::vector<double> error_probability_map(const LatentFieldPosterior& q) {
  std::vector<double> out(q.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = sigmoid(q.m[i]);
  return out;
}

void save_posterior(const LatentFieldPosterior& q,
                    const std::filesystem::path& path) {
  const std::size_t n = static_cast<std::size_t>(q.height) * q.width;
  if (q.m.size() != n || q.log_gamma.size() != n)
    throw std::invalid_argument("save_posterior: inconsistent posterior dimensions");
  ByteWriter w;
  w.magic(kPosteriorMagic);
  w.u32(q.height);
  w.u32(q.width);
  w.f64s(q.m);
  w.f64s(q.log_gamma);
  w.save(path);
}

LatentFieldPosterior load_posterior(const std::filesystem::path& path) {
  ByteReader r = ByteReader::open(path);
  r.expect_magic(kPosteriorMagic);
  LatentFieldPosterior q;
  q.height = r.u32();
  q.width = r.u32();
  const std::size_t n = static_cast<std::size_t>(q.height) * q.width;
  q.m = r.f64s(n);
  q.log_gamma = r.f64s(n);
  r.expect_end();
  return q;
}

}  // namespace eccd
