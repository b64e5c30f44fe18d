#pragma once

// Random problem generators shared by unit and acceptance tests, and the
// conversion of a problem into the oracle's plain representation.

#include <cmath>
#include <vector>

#include "eccd/elbo.hpp"
#include "eccd/numerics.hpp"
#include "oracle/oracle.hpp"

namespace testing_support {

using namespace eccd;

struct Problem {
  LabelMap y;
  std::vector<double> logp;  // HW x K, normalised
  LatentFieldPosterior q;
  LatentFieldPrior p;
  NoiseChannelPair ch;

  ElboInputs inputs(const QuadratureRule& quad) const { return {y, q, p, ch, quad}; }
};

inline std::vector<double> random_logprobs(std::size_t n, std::size_t k, RandomStream& rng,
                                           double spread = 2.0) {
  std::vector<double> s(n * k);
  for (double& x : s) x = spread * rng.normal();
  std::vector<double> out(n * k);
  for (std::size_t i = 0; i < n; ++i) {
    double mx = s[i * k];
    for (std::size_t c = 1; c < k; ++c) mx = std::max(mx, s[i * k + c]);
    double z = 0.0;
    for (std::size_t c = 0; c < k; ++c) z += std::exp(s[i * k + c] - mx);
    for (std::size_t c = 0; c < k; ++c) out[i * k + c] = s[i * k + c] - mx - std::log(z);
  }
  return out;
}

inline std::vector<double> random_logits(std::size_t n, RandomStream& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

struct ProblemOptions {
  bool uniform_channels = false;
  bool varying_scale = true;
  double max_abs_rho = 0.9;
};

inline Problem random_problem(std::size_t h, std::size_t w, std::size_t k, RandomStream& rng,
                              ProblemOptions o = {}) {
  const std::size_t n = h * w;
  std::vector<double> scale(n);
  for (double& s : scale) s = o.varying_scale ? rng.uniform(0.5, 2.0) : 1.0;
  std::vector<double> mu(n);
  for (double& m : mu) m = rng.uniform(-4.0, 1.0);
  const double rv = rng.uniform(-o.max_abs_rho, o.max_abs_rho);
  const double rh = rng.uniform(-o.max_abs_rho, o.max_abs_rho);
  LatentFieldPrior p{mu, KroneckerKmsOperator(h, w, rv, rh, scale)};

  LatentFieldPosterior q = LatentFieldPosterior::uniform(h, w, 0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    q.m[i] = rng.uniform(-5.0, 2.0);
    q.log_gamma[i] = rng.uniform(-1.0, 0.7);
  }
  LabelMap y(h, w, 0);
  for (auto& v : y.data) v = static_cast<std::uint8_t>(rng.below(k));

  NoiseChannelPair ch = NoiseChannelPair::uniform(k);
  if (!o.uniform_channels) {
    ch.w.set_logits(random_logits(k * (k - 1), rng));
    ch.v.set_logits(random_logits(k * (k - 1), rng));
  }
  return {y, random_logprobs(n, k, rng), q, p, ch};
}

inline oracle::Instance to_instance(const Problem& pr) {
  oracle::Instance in;
  in.height = static_cast<int>(pr.y.height);
  in.width = static_cast<int>(pr.y.width);
  in.k = static_cast<int>(pr.ch.w.num_classes());
  const int n = in.size();
  for (auto v : pr.y.data) in.y.push_back(v);
  in.logp = pr.logp;
  in.m.resize(n);
  in.gamma.resize(n);
  in.mu.resize(n);
  for (int i = 0; i < n; ++i) {
    in.m[i] = pr.q.m[i];
    in.gamma[i] = std::exp(pr.q.log_gamma[i]);
    in.mu[i] = pr.p.mu[i];
  }
  const auto sc = pr.p.cov.scale();
  in.sigma = oracle::dense_kron_cov(in.height, in.width, pr.p.cov.rho_v(), pr.p.cov.rho_h(),
                                    std::vector<double>(sc.begin(), sc.end()));
  in.w.resize(in.k, in.k);
  in.v.resize(in.k, in.k);
  for (int a = 0; a < in.k; ++a)
    for (int b = 0; b < in.k; ++b) {
      in.w(a, b) = pr.ch.w(a, b);
      in.v(a, b) = pr.ch.v(a, b);
    }
  return in;
}

/// |a - f| / max(|a|, |f|, 1e-3).
inline double rel_err(double a, double f) {
  return std::abs(a - f) / std::max({std::abs(a), std::abs(f), 1e-3});
}

}  // namespace testing_support
