#include "eccd/noise_model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "eccd/numerics.hpp"

namespace eccd {

namespace {

void check_class(std::size_t c, std::size_t k, const char* what) {
  if (c >= k)
    throw std::out_of_range(std::string(what) + " class index " +
                            std::to_string(c) + " outside [0, " +
                            std::to_string(k) + ")");
}

}  // namespace

TransitionMatrix::TransitionMatrix(std::size_t num_classes)
    : TransitionMatrix(num_classes,
                       std::vector<double>(num_classes * (num_classes - 1), 0.0)) {}

TransitionMatrix::TransitionMatrix(std::size_t num_classes,
                                   std::vector<double> logits)
    : k_(num_classes) {
  if (num_classes < 2)
    throw std::invalid_argument("TransitionMatrix needs at least 2 classes");
  set_logits(std::move(logits));
}

void TransitionMatrix::set_logits(std::vector<double> logits) {
  if (logits.size() != k_ * (k_ - 1))
    throw std::invalid_argument("TransitionMatrix: expected " +
                                std::to_string(k_ * (k_ - 1)) + " logits, got " +
                                std::to_string(logits.size()));
  logits_ = std::move(logits);
  realize();
}

std::size_t TransitionMatrix::logit_index(std::size_t row, std::size_t col) const {
  return col * (k_ - 1) + (row < col ? row : row - 1);
}

void TransitionMatrix::realize() {
  realized_.assign(k_ * k_, 0.0);
  for (std::size_t c = 0; c < k_; ++c) {
    const auto col = std::span<const double>(logits_).subspan(c * (k_ - 1), k_ - 1);
    const double lse = logsumexp(col);
    for (std::size_t k = 0; k < k_; ++k) {
      if (k == c) continue;
      realized_[k * k_ + c] = std::exp(logits_[logit_index(k, c)] - lse);
    }
  }
}

std::vector<double> TransitionMatrix::backprop(
    std::span<const double> d_realized) const {
  if (d_realized.size() != k_ * k_)
    throw std::invalid_argument("TransitionMatrix::backprop: expected K*K gradient");
  std::vector<double> out(logits_.size(), 0.0);
  for (std::size_t c = 0; c < k_; ++c) {
    double mean_g = 0.0;
    for (std::size_t k = 0; k < k_; ++k)
      if (k != c) mean_g += realized_[k * k_ + c] * d_realized[k * k_ + c];
    for (std::size_t k = 0; k < k_; ++k) {
      if (k == c) continue;
      out[logit_index(k, c)] =
          realized_[k * k_ + c] * (d_realized[k * k_ + c] - mean_g);
    }
  }
  return out;
}

double corruption_prob(double eta) { return sigmoid(eta); }

double noise_likelihood(std::size_t observed, std::size_t clean, double eta,
                        const TransitionMatrix& w) {
  check_class(observed, w.num_classes(), "observed");
  check_class(clean, w.num_classes(), "clean");
  if (observed == clean) return sigmoid(-eta);
  return sigmoid(eta) * w(observed, clean);
}

std::vector<double> label_posterior(std::size_t observed, double eta,
                                    const TransitionMatrix& v) {
  check_class(observed, v.num_classes(), "observed");
  std::vector<double> out(v.num_classes());
  const double r = sigmoid(eta);
  for (std::size_t k = 0; k < out.size(); ++k)
    out[k] = k == observed ? sigmoid(-eta) : r * v(k, observed);
  return out;
}

void soft_labels_from(std::size_t observed, double a, const TransitionMatrix& v,
                      std::span<double> out) {
  for (std::size_t k = 0; k < out.size(); ++k)
    out[k] = k == observed ? 1.0 - a : a * v(k, observed);
}

std::vector<double> soft_labels(std::size_t observed, const PixelMarginal& eta,
                                const TransitionMatrix& v,
                                const QuadratureRule& quad) {
  check_class(observed, v.num_classes(), "observed");
  const SigmoidStats s = expected_sigmoid_stats(eta.mean, eta.std, quad);
  std::vector<double> out(v.num_classes());
  soft_labels_from(observed, s.a, v, out);
  return out;
}

}  // namespace eccd
