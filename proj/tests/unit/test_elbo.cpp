#include <doctest.h>

#include <cmath>

#include "eccd/classifier.hpp"
#include "eccd/elbo.hpp"
#include "support.hpp"

using namespace eccd;
using namespace testing_support;

TEST_CASE("terms 4 and 5 cancel under uniform transitions") {
  RandomStream rng(1);
  const QuadratureRule quad = gauss_hermite(16);
  for (int t = 0; t < 200; ++t) {
    const std::size_t k = 2 + rng.below(4);
    const Problem pr = random_problem(1 + rng.below(4), 1 + rng.below(4), k, rng,
                                      {.uniform_channels = true});
    const ElboBreakdown b = elbo(pr.inputs(quad), pr.logp);
    CHECK(std::abs(b.term4 + b.term5) < 1e-10);
  }
}

TEST_CASE("collapsed posterior reduces to cross-entropy") {
  RandomStream rng(2);
  const QuadratureRule quad = gauss_hermite(16);
  Problem pr = random_problem(4, 5, 3, rng, {.uniform_channels = true, .varying_scale = false,
                                             .max_abs_rho = 0.0});
  for (auto& m : pr.p.mu) m = -50.0;
  pr.p = LatentFieldPrior::uniform(4, 5, -50.0, 1.0, 0.0, 0.0);
  pr.q = LatentFieldPosterior::uniform(4, 5, -50.0, 1.0);
  const ElboBreakdown b = elbo(pr.inputs(quad), pr.logp);
  double ce = 0.0;
  for (std::size_t i = 0; i < pr.y.size(); ++i) ce -= pr.logp[i * 3 + pr.y[i]];
  CHECK(std::abs(b.total + ce) < 1e-6);
  CHECK(std::abs(b.term2 + b.term3) < 1e-10);
}

TEST_CASE("terms 2 + 3 equal minus KL and the total matches an independent reference") {
  RandomStream rng(3);
  const QuadratureRule quad = gauss_hermite(32);
  for (int t = 0; t < 20; ++t) {
    const Problem pr = random_problem(1 + rng.below(4), 1 + rng.below(4), 2 + rng.below(2), rng);
    const ElboBreakdown b = elbo(pr.inputs(quad), pr.logp);
    CHECK(std::abs(b.term2 + b.term3 + kl_divergence(pr.q, pr.p)) < 1e-9);
    CHECK(std::abs(b.total - (b.term1 + b.term2 + b.term3 + b.term4 + b.term5)) < 1e-12);
    const double ref = oracle::reference_elbo(to_instance(pr));
    CHECK(std::abs(b.total - ref) < 1e-7 * (1 + std::abs(ref)));
  }
}

TEST_CASE("quadrature terms agree with Monte Carlo") {
  RandomStream rng(4);
  const QuadratureRule quad = gauss_hermite(16);
  const Problem pr = random_problem(3, 3, 3, rng);
  const ElboBreakdown b = elbo(pr.inputs(quad), pr.logp);
  const oracle::McTerms mc = oracle::mc_elbo_terms(to_instance(pr), 100000, 99);
  CHECK(std::abs(b.term1 - mc.term1.mean) < 3 * mc.term1.se);
  CHECK(std::abs(b.term4 - mc.term4.mean) < 3 * mc.term4.se);
  CHECK(std::abs(b.term5 - mc.term5.mean) < 3 * mc.term5.se);
}

TEST_CASE("analytic loss gradients match central differences") {
  RandomStream rng(5);
  const QuadratureRule quad = gauss_hermite(16);
  const std::size_t k = 3;
  Problem pr = random_problem(4, 4, k, rng);
  std::vector<double> scores(pr.logp.size());
  for (double& s : scores) s = rng.normal();
  pr.logp = log_softmax_rows(scores, k);

  auto loss = [&](const Problem& p, const std::vector<double>& sc) {
    return -elbo(p.inputs(quad), log_softmax_rows(sc, k)).total;
  };
  const ElboGradients g = elbo_gradients(pr.inputs(quad), pr.logp);
  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t i = 0; i < pr.q.size(); ++i) {
    Problem a = pr, b = pr;
    a.q.m[i] += h;
    b.q.m[i] -= h;
    worst = std::max(worst, rel_err(g.d_m[i], (loss(a, scores) - loss(b, scores)) / (2 * h)));
    a = pr;
    b = pr;
    a.q.log_gamma[i] += h;
    b.q.log_gamma[i] -= h;
    worst = std::max(worst, rel_err(g.d_log_gamma[i], (loss(a, scores) - loss(b, scores)) / (2 * h)));
  }
  for (std::size_t j = 0; j < scores.size(); ++j) {
    auto sp = scores, sm = scores;
    sp[j] += h;
    sm[j] -= h;
    worst = std::max(worst, rel_err(g.d_logits[j], (loss(pr, sp) - loss(pr, sm)) / (2 * h)));
  }
  for (int which = 0; which < 2; ++which) {
    const auto& grad = which == 0 ? g.d_w_logits : g.d_v_logits;
    for (std::size_t j = 0; j < grad.size(); ++j) {
      Problem a = pr, b = pr;
      TransitionMatrix& ta = which == 0 ? a.ch.w : a.ch.v;
      TransitionMatrix& tb = which == 0 ? b.ch.w : b.ch.v;
      auto la = std::vector<double>(ta.logits().begin(), ta.logits().end());
      auto lb = la;
      la[j] += h;
      lb[j] -= h;
      ta.set_logits(la);
      tb.set_logits(lb);
      worst = std::max(worst, rel_err(grad[j], (loss(a, scores) - loss(b, scores)) / (2 * h)));
    }
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("gradient groups can be skipped") {
  RandomStream rng(6);
  const QuadratureRule quad = gauss_hermite(8);
  const Problem pr = random_problem(2, 3, 2, rng);
  const ElboGradients g = elbo_gradients(pr.inputs(quad), pr.logp, {false, true, false});
  CHECK(g.d_m.empty());
  CHECK(g.d_w_logits.empty());
  CHECK(g.d_logits.size() == 12);
}

TEST_CASE("the ELBO never exceeds the exact marginal likelihood") {
  RandomStream rng(7);
  const QuadratureRule quad = gauss_hermite(16);
  for (int t = 0; t < 10; ++t) {
    const bool square = t % 2 == 1;
    const Problem pr = random_problem(square ? 2 : 1, 2, 2, rng);
    const double lb = elbo(pr.inputs(quad), pr.logp).total;
    CHECK(lb <= oracle::tiny_marginal_loglik(to_instance(pr)) + 1e-6);
  }
}

TEST_CASE("order 16 and order 32 agree for moderate posterior spread") {
  RandomStream rng(8);
  const QuadratureRule q16 = gauss_hermite(16), q32 = gauss_hermite(32);
  for (int t = 0; t < 20; ++t) {
    Problem pr = random_problem(3, 3, 2, rng);
    for (std::size_t i = 0; i < pr.q.size(); ++i) {
      pr.q.m[i] = rng.uniform(-10.0, 10.0);
      pr.q.log_gamma[i] = std::log(rng.uniform(0.05, 0.5));
    }
    CHECK(std::abs(elbo(pr.inputs(q16), pr.logp).total - elbo(pr.inputs(q32), pr.logp).total) < 1e-8);
  }
}

TEST_CASE("quadrature error shrinks with order for wide posteriors") {
  const QuadratureRule q16 = gauss_hermite(16), q32 = gauss_hermite(32), q64 = gauss_hermite(64);
  for (double gamma : {1.0, 2.0, 3.0})
    for (double m : {-10.0, -3.0, 0.0, 4.0}) {
      const auto a = expected_sigmoid_stats(m, gamma, q16), b = expected_sigmoid_stats(m, gamma, q32),
                 c = expected_sigmoid_stats(m, gamma, q64);
      CHECK(std::abs(b.a - c.a) <= std::abs(a.a - c.a) + 1e-15);
      CHECK(std::abs(b.e1 - c.e1) <= std::abs(a.e1 - c.e1) + 1e-15);
      CHECK(std::abs(b.e2 - c.e2) <= std::abs(a.e2 - c.e2) + 1e-15);
    }
}

TEST_CASE("invalid inputs are rejected") {
  RandomStream rng(9);
  const QuadratureRule quad = gauss_hermite(8);
  Problem pr = random_problem(2, 2, 2, rng);
  auto bad = pr.logp;
  bad[0] += 0.1;
  CHECK_THROWS_AS(elbo(pr.inputs(quad), bad), std::invalid_argument);
  CHECK_THROWS_AS(elbo(pr.inputs(quad), std::vector<double>(6, std::log(0.5))), std::invalid_argument);
  pr.y[0] = 2;
  CHECK_THROWS_AS(elbo(pr.inputs(quad), pr.logp), std::invalid_argument);
}

TEST_CASE("soft label map rows are distributions") {
  RandomStream rng(10);
  const QuadratureRule quad = gauss_hermite(16);
  const Problem pr = random_problem(3, 2, 3, rng);
  const auto s = soft_label_map(pr.inputs(quad));
  for (std::size_t i = 0; i < 6; ++i)
    CHECK(s[i * 3] + s[i * 3 + 1] + s[i * 3 + 2] == doctest::Approx(1.0).epsilon(1e-14));
}
