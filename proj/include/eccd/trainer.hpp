#pragma once

// Alternating optimisation of the classifier / transition logits and the
// per-sample latent-field posteriors, and the plain cross-entropy baseline
// driven by the same sample-index stream and optimiser.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "eccd/classifier.hpp"
#include "eccd/data_lab.hpp"
#include "eccd/elbo.hpp"
#include "eccd/keyvalue.hpp"
#include "eccd/latent_field.hpp"
#include "eccd/noise_model.hpp"

namespace eccd {

/// A loss or parameter became NaN/inf; what() names the offending term.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  std::size_t k_model_steps = 1;
  /// 0 freezes every posterior at its initial value.
  std::size_t m_posterior_steps = 5;
  double model_lr = 1e-3;
  double posterior_lr = 1e-2;
  double transition_lr = 1e-3;
  std::size_t max_outer_iters = 1000;
  /// Distinct samples per outer iteration; the classifier steps on their
  /// mean loss gradient, then each gets its own posterior steps.
  std::size_t batch_size = 1;
  std::uint64_t seed = 0;
  std::size_t quad_order = 16;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t patch_radius = 2;
  bool learn_transitions = true;
  /// Posterior initialisation m = m0, gamma = gamma0 for every pixel.
  double m0 = -5.0;
  double gamma0 = 1.0;

  /// Every violated constraint, one message per field; empty when valid.
  std::vector<std::string> problems() const;
  /// Throws std::invalid_argument listing problems().
  void validate() const;

  void write(KeyValueFile& kv) const;
  /// Fields absent from kv keep their defaults.
  static TrainConfig read(const KeyValueFile& kv);
};

/// Adaptive first/second-moment optimiser state for one parameter group.
struct AdamState {
  std::uint64_t steps = 0;
  std::vector<double> m;
  std::vector<double> v;

  explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
  bool operator==(const AdamState&) const = default;
};

/// One bias-corrected step that decreases the loss whose gradient is `grad`.
void adam_step(AdamState& st, std::span<double> params, std::span<const double> grad,
               double lr, const TrainConfig& cfg);

struct TrainerState {
  TrainConfig config;
  PatchLogisticModel model;
  NoiseChannelPair channels;
  std::map<std::string, LatentFieldPosterior> posteriors;
  AdamState model_opt;
  AdamState transition_opt;  // W logits then V logits
  std::uint64_t outer_iter = 0;
  std::string method = "eccd";  // or "ce"

  bool operator==(const TrainerState& o) const;
};

/// One row per sample visit (batch_size rows per outer iteration); terms 2..5 are absent for the CE baseline,
/// whose term1 and total are the negative cross-entropy.
struct MetricsRow {
  std::uint64_t outer_iter = 0;
  std::string sample_id;
  ElboBreakdown elbo;
  bool ce_only = false;
  double wall_ms = 0.0;
};

struct TrainResult {
  TrainerState state;
  std::vector<MetricsRow> metrics;
};

/// Fresh state: zero classifier weights, uniform transitions, every posterior
/// at (m0, gamma0).
TrainerState initial_state(const TrainingSet& dataset, const TrainConfig& config);

/// Index of the sample visited at outer iteration t (batch size 1).
std::size_t visit_index(std::uint64_t seed, std::uint64_t t, std::size_t num_samples);
/// The `batch` distinct sample indices of outer iteration t; the first equals
/// visit_index. Throws std::invalid_argument unless 1 <= batch <= num_samples.
std::vector<std::size_t> visit_batch(std::uint64_t seed, std::uint64_t t,
                                     std::size_t num_samples, std::size_t batch);

/// Runs outer iterations until state.outer_iter reaches max_outer_iters,
/// starting from `resume` if given. Throws std::invalid_argument on an empty
/// dataset or inconsistent shapes and NumericError on a non-finite loss.
TrainResult train_eccd(const TrainingSet& dataset, const LatentFieldPrior& prior,
                       const TrainConfig& config, const TrainerState* resume = nullptr);

/// Same visit schedule and optimiser, loss = sum of per-pixel cross-entropy
/// against the observed labels. Posteriors stay empty.
TrainResult train_ce_baseline(const TrainingSet& dataset, const TrainConfig& config,
                              const TrainerState* resume = nullptr);

/// Cross-entropy of `labels` under HW x K log-probabilities, summed over pixels.
double cross_entropy(std::span<const double> logprobs, const LabelMap& labels,
                     std::size_t k);

/// M posterior steps on one sample with the classifier fixed. Returns the ELBO
/// totals before the first and after each step (M + 1 values); q is updated
/// in place. A fresh optimiser state is used on every call.
std::vector<double> refine_posterior(LatentFieldPosterior& q, const LabelMap& noisy,
                                     std::span<const double> logprobs,
                                     const LatentFieldPrior& prior,
                                     const NoiseChannelPair& channels,
                                     const QuadratureRule& quad, const TrainConfig& cfg,
                                     std::size_t steps, bool record_totals = true);

/// Directory layout: model.bin, transitions.bin, optimizer.bin, meta and
/// posteriors/<sample_id>.bin. Loading either succeeds completely or throws
/// (FormatError on magic/version mismatch or truncation).
void save_state(const TrainerState& state, const std::filesystem::path& dir);
TrainerState load_state(const std::filesystem::path& dir);

}  // namespace eccd
