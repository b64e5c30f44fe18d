#pragma once

// Five-term evidence lower bound of the noisy-label model and its analytic
// gradients. For pixel i with observed class c, a_i = E[r(eta_i)] and
// (e1, e2) from expected_sigmoid_stats:
//
//   term1_i = (1 - a) log p_c + a sum_{k != c} V[k][c] log p_k
//   term4_i = -(e1 + e2 + a sum_{k != c} V[k][c] log V[k][c])
//   term5_i =   e1 + e2 + a sum_{k != c} V[k][c] log W[c][k]
//
// and term2 + term3 = -KL[q(eta) || p(eta)] with
//   term2 = -E_q[log q] = sum log gamma_i + HW (1 + log 2 pi) / 2
//   term3 =  E_q[log p].
// All one-dimensional expectations use Gauss-Hermite quadrature.

#include <span>
#include <vector>

#include "eccd/grid.hpp"
#include "eccd/latent_field.hpp"
#include "eccd/noise_model.hpp"
#include "eccd/quadrature.hpp"

namespace eccd {

struct ElboBreakdown {
  double term1 = 0.0;  // expected soft-label log-likelihood of the classifier
  double term2 = 0.0;  // entropy of q(eta)
  double term3 = 0.0;  // cross term E_q[log p(eta)]
  double term4 = 0.0;  // entropy of q(y* | y, eta)
  double term5 = 0.0;  // expected noise-channel log-likelihood
  double total = 0.0;
};

/// Everything the ELBO needs besides the classifier output.
struct ElboInputs {
  const LabelMap& noisy;
  const LatentFieldPosterior& q;
  const LatentFieldPrior& p;
  const NoiseChannelPair& channels;
  const QuadratureRule& quad;
};

/// `logprobs` is HW x K row-major, each row a normalised log-probability
/// vector. Throws std::invalid_argument on shape mismatch or rows whose
/// logsumexp differs from 0 by more than 1e-6.
ElboBreakdown elbo(const ElboInputs& in, std::span<const double> logprobs);

/// Gradients of the training loss -total (not of total).
struct ElboGradients {
  std::vector<double> d_m;
  std::vector<double> d_log_gamma;
  std::vector<double> d_logits;    // HW x K, w.r.t. unnormalised classifier scores
  std::vector<double> d_w_logits;  // K (K - 1)
  std::vector<double> d_v_logits;  // K (K - 1)
};

/// Which gradient groups to fill; skipped groups are left empty.
struct GradientRequest {
  bool posterior = true;
  bool classifier = true;
  bool transitions = true;
};

ElboGradients elbo_gradients(const ElboInputs& in, std::span<const double> logprobs,
                             GradientRequest want = {});

/// Soft labels of every pixel (HW x K) under the current posterior and V.
std::vector<double> soft_label_map(const ElboInputs& in);

}  // namespace eccd
