#include "eccd/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "eccd/numerics.hpp"

namespace eccd {

QuadratureRule gauss_hermite(std::size_t order) {
  if (order == 0 || order > kMaxQuadratureOrder)
    throw std::invalid_argument("gauss_hermite: order " + std::to_string(order) +
                                " outside [1, 64]");
  // Newton iteration on orthonormal Hermite polynomials (weight e^{-x^2}),
  // largest root first, then rescaled to the standard normal.
  const int n = static_cast<int>(order);
  const int half = (n + 1) / 2;
  const double pim4 = std::pow(std::numbers::pi, -0.25);
  std::vector<double> x(order), w(order);
  double z = 0.0;
  for (int i = 0; i < half; ++i) {
    if (i == 0)
      z = std::sqrt(2.0 * n + 1.0) - 1.85575 * std::pow(2.0 * n + 1.0, -0.16667);
    else if (i == 1)
      z -= 1.14 * std::pow(static_cast<double>(n), 0.426) / z;
    else if (i == 2)
      z = 1.86 * z - 0.86 * x[0];
    else if (i == 3)
      z = 1.91 * z - 0.91 * x[1];
    else
      z = 2.0 * z - x[i - 2];

    double pp = 0.0;
    bool converged = false;
    for (int it = 0; it < 100; ++it) {
      double p1 = pim4, p2 = 0.0;
      for (int j = 1; j <= n; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = z * std::sqrt(2.0 / j) * p2 - std::sqrt((j - 1.0) / j) * p3;
      }
      pp = std::sqrt(2.0 * n) * p2;
      const double z1 = z;
      z = z1 - p1 / pp;
      if (std::abs(z - z1) <= 1e-15 * std::max(1.0, std::abs(z))) {
        converged = true;
        break;
      }
    }
    if (!converged)
      throw std::runtime_error("gauss_hermite: Newton iteration did not converge");
    x[i] = z;
    w[i] = 2.0 / (pp * pp);
  }

  QuadratureRule rule;
  rule.nodes.resize(order);
  rule.weights.resize(order);
  // x[0..half) holds the non-negative roots in descending order.
  for (int i = 0; i < half; ++i) {
    const double node = std::numbers::sqrt2 * x[i];
    rule.nodes[n - 1 - i] = node;
    rule.nodes[i] = -node;
    rule.weights[n - 1 - i] = w[i];
    rule.weights[i] = w[i];
  }
  if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
  const double total = pairwise_sum(rule.weights);
  for (double& wi : rule.weights) wi /= total;
  return rule;
}

namespace {

void check_std(double std) {
  if (!(std > 0.0) || !std::isfinite(std))
    throw std::domain_error("Gaussian expectation needs std > 0");
}

}  // namespace

SigmoidStats expected_sigmoid_stats(double mean, double std,
                                    const QuadratureRule& quad) {
  check_std(std);
  double a = 0.0, e1 = 0.0, e2 = 0.0;
  for (std::size_t k = 0; k < quad.order(); ++k) {
    const double eta = mean + std * quad.nodes[k];
    // One exp and one log1p give sigmoid(+-eta) and both log-sigmoids.
    const double e = std::exp(-std::abs(eta));
    const double soft = std::log1p(e);
    const double big = 1.0 / (1.0 + e), small = e / (1.0 + e);
    const double r = eta >= 0.0 ? big : small;
    const double rc = eta >= 0.0 ? small : big;
    const double wk = quad.weights[k];
    a += wk * r;
    e1 -= wk * rc * (std::max(eta, 0.0) + soft);
    e2 -= wk * r * (std::max(-eta, 0.0) + soft);
  }
  return {a, e1, e2};
}

SigmoidMoment expected_sigmoid_grad(double mean, double std,
                                    const QuadratureRule& quad) {
  check_std(std);
  double a = 0.0, d1 = 0.0, dz = 0.0;
  for (std::size_t k = 0; k < quad.order(); ++k) {
    const double z = quad.nodes[k];
    const double eta = mean + std * z;
    const double e = std::exp(-std::abs(eta));
    const double big = 1.0 / (1.0 + e), small = e / (1.0 + e);
    const double r = eta >= 0.0 ? big : small;
    const double slope = big * small;
    a += quad.weights[k] * r;
    d1 += quad.weights[k] * slope;
    dz += quad.weights[k] * slope * z;
  }
  return {a, d1, std * dz};
}

}  // namespace eccd
