#pragma once

// Discrete corruption channel between clean and observed labels:
//
//   p(y = k | y* = c, eta) = (1 - r(eta))        if k == c
//                          = r(eta) * W[k][c]    otherwise
//
// and the inverse channel q(y* | y, eta) of the same form with V. Both
// transition matrices are column-stochastic with a zero diagonal.

#include <cstddef>
#include <span>
#include <vector>

#include "eccd/latent_field.hpp"
#include "eccd/quadrature.hpp"

namespace eccd {

/// K x K column-stochastic matrix with zero diagonal, parameterised by a
/// softmax over the K - 1 off-diagonal logits of each column. Logit of entry
/// (k, c), k != c, sits at c * (K - 1) + (k < c ? k : k - 1).
class TransitionMatrix {
 public:
  /// Uniform matrix (all logits zero): every off-diagonal entry 1 / (K - 1).
  explicit TransitionMatrix(std::size_t num_classes);
  /// Throws std::invalid_argument if logits.size() != K (K - 1).
  TransitionMatrix(std::size_t num_classes, std::vector<double> logits);

  std::size_t num_classes() const { return k_; }
  std::span<const double> logits() const { return logits_; }
  void set_logits(std::vector<double> logits);

  /// realized[row][col]
  double operator()(std::size_t row, std::size_t col) const {
    return realized_[row * k_ + col];
  }
  std::size_t logit_index(std::size_t row, std::size_t col) const;

  /// Chains dL/dM[k][c] (row-major K x K) through the per-column softmax to
  /// dL/dlogits.
  std::vector<double> backprop(std::span<const double> d_realized) const;

 private:
  void realize();

  std::size_t k_;
  std::vector<double> logits_;
  std::vector<double> realized_;
};

struct NoiseChannelPair {
  TransitionMatrix w;  // forward: p(observed | clean)
  TransitionMatrix v;  // inverse: q(clean | observed)

  static NoiseChannelPair uniform(std::size_t num_classes) {
    return {TransitionMatrix(num_classes), TransitionMatrix(num_classes)};
  }
};

/// r(eta) = sigmoid(eta).
double corruption_prob(double eta);

/// p(y = observed | y* = clean, eta). Throws std::out_of_range on bad indices.
double noise_likelihood(std::size_t observed, std::size_t clean, double eta,
                        const TransitionMatrix& w);

/// q(y* = k | y = observed, eta) for every k.
std::vector<double> label_posterior(std::size_t observed, double eta,
                                    const TransitionMatrix& v);

/// Marginal soft label E_q(eta)[q(y* | y = observed, eta)]:
///   s[observed] = 1 - a,  s[k] = a V[k][observed],  a = E[r(eta)].
std::vector<double> soft_labels(std::size_t observed, const PixelMarginal& eta,
                                const TransitionMatrix& v,
                                const QuadratureRule& quad);

/// Fills `out` (length K) from a precomputed a = E[r(eta)].
void soft_labels_from(std::size_t observed, double a, const TransitionMatrix& v,
                      std::span<double> out);

}  // namespace eccd
