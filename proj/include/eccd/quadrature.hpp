#pragma once

// Gauss-Hermite rules in expectation form, E[f(mean + std * z)] with z
// standard normal, and the per-pixel sigmoid expectations the ELBO needs.

#include <cstddef>
#include <vector>

namespace eccd {

struct QuadratureRule {
  std::vector<double> nodes;    // ascending, symmetric about 0
  std::vector<double> weights;  // positive, sum to 1
  std::size_t order() const { return nodes.size(); }
};

inline constexpr std::size_t kMaxQuadratureOrder = 64;
inline constexpr std::size_t kDefaultQuadratureOrder = 16;

/// Exact for polynomials of degree <= 2 * order - 1 against N(0, 1).
/// Throws std::invalid_argument for order 0 or order > kMaxQuadratureOrder.
QuadratureRule gauss_hermite(std::size_t order);

/// Expectations under eta ~ N(mean, std^2), r = sigmoid:
///   a  = E[r(eta)]
///   e1 = E[(1 - r) log(1 - r)]
///   e2 = E[r log r]
struct SigmoidStats {
  double a;
  double e1;
  double e2;
};

/// Throws std::domain_error unless std > 0.
SigmoidStats expected_sigmoid_stats(double mean, double std,
                                    const QuadratureRule& quad);

/// a together with its reparameterised derivatives:
///   da/dmean = E[r'(eta)],  da/dlog_std = std * E[r'(eta) z].
struct SigmoidMoment {
  double a;
  double da_dmean;
  double da_dlog_std;
};
SigmoidMoment expected_sigmoid_grad(double mean, double std,
                                    const QuadratureRule& quad);

}  // namespace eccd
