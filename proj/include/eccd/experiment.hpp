#pragma once

// Experiment commands behind the CLI verbs, and their flat key=value
// configuration (defaults < config file < command-line overrides).

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "eccd/data_lab.hpp"
#include "eccd/keyvalue.hpp"
#include "eccd/latent_field.hpp"
#include "eccd/trainer.hpp"

namespace eccd {

/// Bad user input (unknown key, unparsable or out-of-range value, missing
/// path). Each entry of problems() is one complete message.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

struct ConfigKey {
  const char* name;
  const char* default_value;  // "" = unset / inherited
  const char* help;
};

/// Every recognised key in a stable order.
const std::vector<ConfigKey>& config_keys();

struct ExperimentConfig {
  TrainConfig train;
  std::string method = "eccd";  // eccd | ce

  // Prior over the error logit field.
  double mu = -2.0;
  double sigma = 1.0;
  double rho_v = 0.75;
  double rho_h = 0.75;

  // Noise injection.
  std::string family = "whu";  // morph | whu
  double alpha = 0.3;
  double beta = 0.5;
  double phi = 0.2;
  double zeta = 0.05;
  double lambda = 0.5;

  // Synthetic generation.
  std::size_t n = 50;
  std::size_t height = 32;
  std::size_t width = 32;

  // Paths and selectors.
  std::filesystem::path data;
  std::filesystem::path holdout;
  std::filesystem::path out;
  std::filesystem::path state;
  std::string sample;
  std::vector<double> rho_list{0.0, 0.3, 0.5, 0.75, 0.99};

  /// Parses key=value entries over the defaults; collects every unknown key,
  /// parse failure and constraint violation, then throws ConfigError if any.
  static ExperimentConfig from_values(const KeyValueFile& values);
  /// Defaults, then `config_file` (if non-empty), then `overrides`.
  static ExperimentConfig load(const std::filesystem::path& config_file,
                               const KeyValueFile& overrides);

  LatentFieldPrior prior() const;
};

/// Returns value to text for every recognised key (round-trips through
/// from_values).
KeyValueFile to_values(const ExperimentConfig& cfg);

// Commands. Each throws ConfigError for usage problems and other exceptions
// for runtime failures.

/// Clean synthetic dataset in cfg.out (noisy labels = clean labels).
void cmd_generate(const ExperimentConfig& cfg);
/// Reads cfg.data, corrupts the clean labels with cfg.family, writes cfg.out.
void cmd_add_noise(const ExperimentConfig& cfg);
/// Trains on cfg.data; writes <out>/state/ and <out>/metrics.csv.
void cmd_train(const ExperimentConfig& cfg);
/// Evaluates cfg.state on cfg.data; writes <out>/eval.csv. Returns mean Dice.
double cmd_eval(const ExperimentConfig& cfg);
/// One train + eval per rho (cfg.holdout if set, else cfg.data); writes
/// <out>/sweep.csv and <out>/rho_<value>/.
void cmd_sweep_rho(const ExperimentConfig& cfg);
/// Writes the posterior error map of cfg.sample from cfg.state to cfg.out
/// (a .pgm path).
void cmd_export_error_map(const ExperimentConfig& cfg);

/// floor(255 * sigmoid(m_i) + 0.5) per pixel.
LabelMap error_map_image(const LatentFieldPosterior& q);

struct EvalRow {
  std::string sample_id;
  double dice;
  double iou;
};
/// Dice/IoU of the argmax prediction against the clean labels of every
/// sample. Throws ConfigError if a sample lacks clean labels.
std::vector<EvalRow> evaluate(const PatchLogisticModel& model, const NoisyDataset& ds);

/// Header `outer_iter,sample_id,term1,term2,term3,term4,term5,total,wall_ms`;
/// CE rows leave term2..term5 empty.
std::string metrics_csv(const std::vector<MetricsRow>& rows);

}  // namespace eccd
