#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "eccd/binary_io.hpp"
#include "eccd/latent_field.hpp"
#include "support.hpp"

using namespace eccd;
using namespace testing_support;

TEST_CASE("KL matches the dense Gaussian formula") {
  RandomStream rng(5);
  for (int t = 0; t < 50; ++t) {
    const Problem pr = random_problem(1 + rng.below(6), 1 + rng.below(6), 2, rng);
    const oracle::Instance in = to_instance(pr);
    const double ref = oracle::dense_gaussian_kl(in.m, in.gamma, in.mu, in.sigma);
    CHECK(std::abs(kl_divergence(pr.q, pr.p) - ref) < 1e-8 * (1 + std::abs(ref)));
  }
}

TEST_CASE("KL is non-negative and zero at q = p") {
  RandomStream rng(6);
  for (int t = 0; t < 300; ++t) {
    const Problem pr = random_problem(1 + rng.below(5), 1 + rng.below(5), 2, rng);
    CHECK(kl_divergence(pr.q, pr.p) >= 0.0);
  }
  const auto p = LatentFieldPrior::uniform(4, 5, -2.0, 1.3, 0.0, 0.0);
  const auto q = LatentFieldPosterior::uniform(4, 5, -2.0, 1.3);
  CHECK(std::abs(kl_divergence(q, p)) < 1e-10);
}

TEST_CASE("KL gradient matches central differences") {
  RandomStream rng(7);
  const Problem pr = random_problem(3, 4, 2, rng);
  const KlGradient g = kl_gradient(pr.q, pr.p);
  const double h = 1e-5;
  for (std::size_t i = 0; i < pr.q.size(); ++i) {
    auto qp = pr.q, qm = pr.q;
    qp.m[i] += h;
    qm.m[i] -= h;
    CHECK(rel_err(g.d_m[i], (kl_divergence(qp, pr.p) - kl_divergence(qm, pr.p)) / (2 * h)) < 1e-6);
    qp = pr.q;
    qm = pr.q;
    qp.log_gamma[i] += h;
    qm.log_gamma[i] -= h;
    CHECK(rel_err(g.d_log_gamma[i],
                  (kl_divergence(qp, pr.p) - kl_divergence(qm, pr.p)) / (2 * h)) < 1e-6);
  }
}

TEST_CASE("dimension mismatches are rejected") {
  const auto p = LatentFieldPrior::uniform(3, 3, 0.0, 1.0, 0.5, 0.5);
  const auto q = LatentFieldPosterior::uniform(3, 4, 0.0, 1.0);
  CHECK_THROWS_AS(kl_divergence(q, p), std::invalid_argument);
  CHECK_THROWS_AS(marginal(q, 12), std::out_of_range);
}

TEST_CASE("marginals and error-probability map") {
  auto q = LatentFieldPosterior::uniform(2, 2, 0.0, 2.0);
  q.m[3] = -50.0;
  const PixelMarginal pm = marginal(q, 1);
  CHECK(pm.mean == 0.0);
  CHECK(pm.std == doctest::Approx(2.0));
  const auto e = error_probability_map(q);
  CHECK(e[0] == 0.5);
  CHECK(e[3] < 1e-20);
}

TEST_CASE("posterior checkpoint round trip and truncation") {
  const auto dir = std::filesystem::temp_directory_path() / "eccd_lf_test";
  std::filesystem::create_directories(dir);
  RandomStream rng(8);
  const Problem pr = random_problem(5, 3, 2, rng);
  save_posterior(pr.q, dir / "q.bin");
  CHECK(load_posterior(dir / "q.bin") == pr.q);
  CHECK(std::filesystem::file_size(dir / "q.bin") == 9 + 8 + 2 * 15 * 8);

  std::filesystem::resize_file(dir / "q.bin", 9 + 8 + 20);
  CHECK_THROWS_AS(load_posterior(dir / "q.bin"), FormatError);
  {
    std::ofstream f(dir / "bad.bin", std::ios::binary);
    f << "ECCDPOST2";
  }
  CHECK_THROWS_AS(load_posterior(dir / "bad.bin"), FormatError);
  std::filesystem::remove_all(dir);
}
