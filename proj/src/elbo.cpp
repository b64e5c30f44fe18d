#include "eccd/elbo.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "eccd/numerics.hpp"

namespace eccd {

namespace {

std::size_t check_inputs(const ElboInputs& in, std::span<const double> logprobs) {
  const std::size_t n = in.p.size();
  const std::size_t k = in.channels.v.num_classes();
  if (in.channels.w.num_classes() != k)
    throw std::invalid_argument("elbo: W and V disagree on the class count");
  if (!in.noisy.same_shape(in.p.height(), in.p.width()))
    throw std::invalid_argument("elbo: label map does not match the prior grid");
  if (in.q.size() != n || in.q.log_gamma.size() != n)
    throw std::invalid_argument("elbo: posterior does not match the prior grid");
  if (logprobs.size() != n * k)
    throw std::invalid_argument("elbo: expected " + std::to_string(n * k) +
                                " classifier log-probabilities, got " +
                                std::to_string(logprobs.size()));
  for (std::size_t i = 0; i < n; ++i) {
    if (in.noisy[i] >= k)
      throw std::invalid_argument("elbo: label " + std::to_string(in.noisy[i]) +
                                  " at pixel " + std::to_string(i) +
                                  " exceeds class count");
    const double lse = logsumexp(logprobs.subspan(i * k, k));
    if (!(std::abs(lse) <= 1e-6))
      throw std::invalid_argument("elbo: classifier row " + std::to_string(i) +
                                  " is not a normalised log-probability vector");
  }
  return k;
}

// Per observed class c: sum_{k != c} V[k][c] log V[k][c] and
// sum_{k != c} V[k][c] log W[c][k]. Zero entries contribute nothing.
struct ChannelConstants {
  std::vector<double> v_entropy;
  std::vector<double> v_log_w;
};

ChannelConstants channel_constants(const NoiseChannelPair& ch) {
  const std::size_t k = ch.v.num_classes();
  ChannelConstants cc{std::vector<double>(k, 0.0), std::vector<double>(k, 0.0)};
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t j = 0; j < k; ++j) {
      if (j == c) continue;
      const double v = ch.v(j, c);
      if (v > 0.0) {
        cc.v_entropy[c] += v * std::log(v);
        cc.v_log_w[c] += v * std::log(ch.w(c, j));
      }
    }
  }
  return cc;
}

}  // namespace

ElboBreakdown elbo(const ElboInputs& in, std::span<const double> logprobs) {
  const std::size_t k = check_inputs(in, logprobs);
  const std::size_t n = in.p.size();
  const ChannelConstants cc = channel_constants(in.channels);
  const TransitionMatrix& v = in.channels.v;

  std::vector<double> t1(n), t4(n), t5(n);
  parallel_for(n, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      const std::size_t c = in.noisy[i];
      const double* lp = logprobs.data() + i * k;
      const SigmoidStats s = expected_sigmoid_stats(in.q.m[i], in.q.gamma(i), in.quad);
      double off = 0.0;
      for (std::size_t j = 0; j < k; ++j)
        if (j != c) off += v(j, c) * lp[j];
      t1[i] = (1.0 - s.a) * lp[c] + s.a * off;
      t4[i] = -(s.e1 + s.e2 + s.a * cc.v_entropy[c]);
      t5[i] = s.e1 + s.e2 + s.a * cc.v_log_w[c];
    }
  });

  ElboBreakdown out;
  out.term1 = pairwise_sum(t1);
  out.term4 = pairwise_sum(t4);
  out.term5 = pairwise_sum(t5);

  const double log2pi = std::log(2.0 * std::numbers::pi);
  const double hw = static_cast<double>(n);
  const std::vector<double> pdiag = precision_diagonal(in.p.cov);
  std::vector<double> diff(n), trace(n);
  for (std::size_t i = 0; i < n; ++i) {
    diff[i] = in.q.m[i] - in.p.mu[i];
    trace[i] = std::exp(2.0 * in.q.log_gamma[i]) * pdiag[i];
  }
  out.term2 = pairwise_sum(in.q.log_gamma) + 0.5 * hw * (1.0 + log2pi);
  out.term3 = -0.5 * (hw * log2pi + kron_logdet(in.p.cov) + pairwise_sum(trace) +
                      quadratic_form(in.p.cov, diff));
  out.total = out.term1 + out.term2 + out.term3 + out.term4 + out.term5;
  return out;
}

ElboGradients elbo_gradients(const ElboInputs& in, std::span<const double> logprobs,
                             GradientRequest want) {
  const std::size_t k = check_inputs(in, logprobs);
  const std::size_t n = in.p.size();
  const ChannelConstants cc = channel_constants(in.channels);
  const TransitionMatrix& v = in.channels.v;
  const TransitionMatrix& w = in.channels.w;

  ElboGradients g;
  std::vector<double> a(n);
  if (want.posterior) {
    g.d_m.resize(n);
    g.d_log_gamma.resize(n);
  }
  if (want.classifier) g.d_logits.resize(n * k);

  parallel_for(n, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      const std::size_t c = in.noisy[i];
      const double* lp = logprobs.data() + i * k;
      const SigmoidMoment sm = expected_sigmoid_grad(in.q.m[i], in.q.gamma(i), in.quad);
      a[i] = sm.a;
      if (want.posterior) {
        // d(term1 + term4 + term5)/da; e1 and e2 cancel between terms 4 and 5.
        double off = 0.0;
        for (std::size_t j = 0; j < k; ++j)
          if (j != c) off += v(j, c) * lp[j];
        const double g_a = off - lp[c] + cc.v_log_w[c] - cc.v_entropy[c];
        g.d_m[i] = -g_a * sm.da_dmean;
        g.d_log_gamma[i] = -g_a * sm.da_dlog_std;
      }
      if (want.classifier) {
        double* dl = g.d_logits.data() + i * k;
        for (std::size_t j = 0; j < k; ++j) {
          const double soft = j == c ? 1.0 - sm.a : sm.a * v(j, c);
          dl[j] = std::exp(lp[j]) - soft;
        }
      }
    }
  });

  if (want.posterior) {
    const KlGradient kg = kl_gradient(in.q, in.p);
    for (std::size_t i = 0; i < n; ++i) {
      g.d_m[i] += kg.d_m[i];
      g.d_log_gamma[i] += kg.d_log_gamma[i];
    }
  }

  if (want.transitions) {
    // Per observed class c: A_c = sum a_i and L_c[j] = sum a_i log p_ij over
    // pixels with y_i = c, gathered in pixel order and pairwise-summed.
    std::vector<double> dv(k * k, 0.0), dw(k * k, 0.0);
    std::vector<double> buf;
    buf.reserve(n);
    for (std::size_t c = 0; c < k; ++c) {
      buf.clear();
      for (std::size_t i = 0; i < n; ++i)
        if (in.noisy[i] == c) buf.push_back(a[i]);
      const double sum_a = pairwise_sum(buf);
      for (std::size_t j = 0; j < k; ++j) {
        if (j == c) continue;
        buf.clear();
        for (std::size_t i = 0; i < n; ++i)
          if (in.noisy[i] == c) buf.push_back(a[i] * logprobs[i * k + j]);
        const double sum_alp = pairwise_sum(buf);
        const double vjc = v(j, c);
        const double wcj = w(c, j);
        // Loss gradients (negated ELBO partials).
        dv[j * k + c] = -(sum_alp + sum_a * (std::log(wcj) - std::log(vjc) - 1.0));
        dw[c * k + j] = -(sum_a * vjc / wcj);
      }
    }
    g.d_v_logits = v.backprop(dv);
    g.d_w_logits = w.backprop(dw);
  }
  return g;
}

std::vector<double> soft_label_map(const ElboInputs& in) {
  const std::size_t n = in.p.size();
  const std::size_t k = in.channels.v.num_classes();
  std::vector<double> out(n * k);
  for (std::size_t i = 0; i < n; ++i) {
    const SigmoidStats s = expected_sigmoid_stats(in.q.m[i], in.q.gamma(i), in.quad);
    soft_labels_from(in.noisy[i], s.a, in.channels.v,
                     std::span<double>(out).subspan(i * k, k));
  }
  return out;
}

}  // namespace eccd
