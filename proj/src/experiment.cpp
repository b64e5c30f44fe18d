#include "eccd/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>

#include "eccd/kms.hpp"
#include "eccd/numerics.hpp"

namespace eccd {

namespace {

std::string join_problems(const std::vector<std::string>& p) {
  std::string msg = "configuration error";
  if (p.size() == 1) return msg + ": " + p.front();
  for (const auto& s : p) msg += "\n  " + s;
  return msg;
}

struct KeyDef {
  ConfigKey key;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  // nullopt for aliases, which are write-only.
  std::function<std::optional<std::string>(const ExperimentConfig&)> get;
};

std::string rho_list_text(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + format_double(v[i]);
  return out;
}

std::vector<double> parse_rho_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_double("rho_list", item));
  if (out.empty()) throw std::invalid_argument("rho_list: expected a comma-separated list");
  return out;
}

#define TRAIN_UINT(name, help)                                                        \
  KeyDef{{#name, "", help},                                                           \
         [](ExperimentConfig& c, const std::string& v) {                              \
           c.train.name = static_cast<decltype(c.train.name)>(parse_u64(#name, v));   \
         },                                                                           \
         [](const ExperimentConfig& c) -> std::optional<std::string> {                \
           return std::to_string(c.train.name);                                       \
         }}
#define TRAIN_REAL(name, help)                                                        \
  KeyDef{{#name, "", help},                                                           \
         [](ExperimentConfig& c, const std::string& v) {                              \
           c.train.name = parse_double(#name, v);                                     \
         },                                                                           \
         [](const ExperimentConfig& c) -> std::optional<std::string> {                \
           return format_double(c.train.name);                                        \
         }}
#define EXP_REAL(name, help)                                                          \
  KeyDef{{#name, "", help},                                                           \
         [](ExperimentConfig& c, const std::string& v) { c.name = parse_double(#name, v); }, \
         [](const ExperimentConfig& c) -> std::optional<std::string> {                \
           return format_double(c.name);                                              \
         }}
#define EXP_UINT(name, help)                                                          \
  KeyDef{{#name, "", help},                                                           \
         [](ExperimentConfig& c, const std::string& v) {                              \
           c.name = static_cast<std::size_t>(parse_u64(#name, v));                    \
         },                                                                           \
         [](const ExperimentConfig& c) -> std::optional<std::string> {                \
           return std::to_string(c.name);                                             \
         }}
#define EXP_TEXT(name, help)                                                          \
  KeyDef{{#name, "", help},                                                           \
         [](ExperimentConfig& c, const std::string& v) { c.name = v; },               \
         [](const ExperimentConfig& c) -> std::optional<std::string> {                \
           return std::string(c.name);                                                \
         }}

// Aliases precede the keys they fan out to, so an explicit rho_v or height
// still wins over rho or hw.
const std::vector<KeyDef>& key_defs() {
  static const std::vector<KeyDef> defs = [] {
    std::vector<KeyDef> d{
        EXP_TEXT(method, "training method: eccd or ce"),
        TRAIN_UINT(seed, "seed for generation, noise injection and training"),
        TRAIN_UINT(k_model_steps, "classifier steps per outer iteration"),
        TRAIN_UINT(m_posterior_steps, "posterior steps per outer iteration (0 freezes)"),
        TRAIN_REAL(model_lr, "classifier learning rate"),
        TRAIN_REAL(posterior_lr, "posterior learning rate"),
        TRAIN_REAL(transition_lr, "transition-logit learning rate"),
        TRAIN_UINT(max_outer_iters, "number of outer iterations"),
        TRAIN_UINT(batch_size, "samples per outer iteration"),
        TRAIN_UINT(quad_order, "Gauss-Hermite order"),
        TRAIN_REAL(beta1, "first-moment decay"),
        TRAIN_REAL(beta2, "second-moment decay"),
        TRAIN_REAL(adam_eps, "optimizer epsilon"),
        TRAIN_UINT(patch_radius, "classifier window radius"),
        KeyDef{{"learn_transitions", "", "update W and V logits"},
               [](ExperimentConfig& c, const std::string& v) {
                 c.train.learn_transitions = parse_bool("learn_transitions", v);
               },
               [](const ExperimentConfig& c) -> std::optional<std::string> {
                 return c.train.learn_transitions ? "true" : "false";
               }},
        TRAIN_REAL(m0, "initial posterior mean"),
        TRAIN_REAL(gamma0, "initial posterior standard deviation"),
        EXP_REAL(mu, "prior mean of the error logit"),
        EXP_REAL(sigma, "prior standard deviation of the error logit"),
        KeyDef{{"rho", "", "sets rho_v and rho_h"},
               [](ExperimentConfig& c, const std::string& v) {
                 c.rho_v = c.rho_h = parse_double("rho", v);
               },
               [](const ExperimentConfig&) -> std::optional<std::string> { return {}; }},
        EXP_REAL(rho_v, "vertical prior correlation"),
        EXP_REAL(rho_h, "horizontal prior correlation"),
        EXP_TEXT(family, "noise family: morph or whu"),
        EXP_REAL(alpha, "morph: probability of corrupting a mask"),
        EXP_REAL(beta, "morph: corruption strength"),
        EXP_REAL(phi, "whu: omission probability per component"),
        EXP_REAL(zeta, "whu: commission rate (added blobs per component)"),
        EXP_REAL(lambda, "whu: boundary perturbation probability per component"),
        EXP_UINT(n, "generate: number of samples"),
        KeyDef{{"hw", "", "generate: sets height and width"},
               [](ExperimentConfig& c, const std::string& v) {
                 c.height = c.width = static_cast<std::size_t>(parse_u64("hw", v));
               },
               [](const ExperimentConfig&) -> std::optional<std::string> { return {}; }},
        EXP_UINT(height, "generate: image height"),
        EXP_UINT(width, "generate: image width"),
        KeyDef{{"data", "", "dataset directory"},
               [](ExperimentConfig& c, const std::string& v) { c.data = v; },
               [](const ExperimentConfig& c) -> std::optional<std::string> {
                 return c.data.string();
               }},
        KeyDef{{"holdout", "", "held-out dataset directory (sweep-rho)"},
               [](ExperimentConfig& c, const std::string& v) { c.holdout = v; },
               [](const ExperimentConfig& c) -> std::optional<std::string> {
                 return c.holdout.string();
               }},
        KeyDef{{"out", "", "output directory (output .pgm for export-error-map)"},
               [](ExperimentConfig& c, const std::string& v) { c.out = v; },
               [](const ExperimentConfig& c) -> std::optional<std::string> {
                 return c.out.string();
               }},
        KeyDef{{"state", "", "trainer state directory"},
               [](ExperimentConfig& c, const std::string& v) { c.state = v; },
               [](const ExperimentConfig& c) -> std::optional<std::string> {
                 return c.state.string();
               }},
        EXP_TEXT(sample, "sample id (export-error-map)"),
        KeyDef{{"rho_list", "", "comma-separated rho values (sweep-rho)"},
               [](ExperimentConfig& c, const std::string& v) { c.rho_list = parse_rho_list(v); },
               [](const ExperimentConfig& c) -> std::optional<std::string> {
                 return rho_list_text(c.rho_list);
               }},
    };
    return d;
  }();
  return defs;
}

#undef TRAIN_UINT
#undef TRAIN_REAL
#undef EXP_REAL
#undef EXP_UINT
#undef EXP_TEXT

std::vector<std::string> semantic_problems(const ExperimentConfig& c) {
  std::vector<std::string> out = c.train.problems();
  auto in01 = [&](const char* name, double v) {
    if (!(v >= 0.0 && v <= 1.0)) out.push_back(std::string(name) + " must lie in [0, 1], got " + format_double(v));
  };
  auto rho_ok = [&](const std::string& name, double v) {
    if (!(std::abs(v) <= kMaxAbsRho))
      out.push_back(name + " must lie in [-" + format_double(kMaxAbsRho) + ", " +
                    format_double(kMaxAbsRho) + "], got " + format_double(v));
  };
  if (c.method != "eccd" && c.method != "ce")
    out.push_back("method must be eccd or ce, got '" + c.method + "'");
  if (c.family != "morph" && c.family != "whu")
    out.push_back("family must be morph or whu, got '" + c.family + "'");
  if (!std::isfinite(c.mu)) out.push_back("mu must be finite");
  if (!(c.sigma > 0.0) || !std::isfinite(c.sigma)) out.push_back("sigma must be > 0");
  if (c.rho_v == c.rho_h) {
    rho_ok("rho", c.rho_v);
  } else {
    rho_ok("rho_v", c.rho_v);
    rho_ok("rho_h", c.rho_h);
  }
  for (double r : c.rho_list) rho_ok("rho_list entry", r);
  in01("alpha", c.alpha);
  if (!(c.beta >= 0.0 && c.beta <= 1.0)) out.push_back("beta must lie in [0, 1], got " + format_double(c.beta));
  in01("phi", c.phi);
  in01("zeta", c.zeta);
  in01("lambda", c.lambda);
  if (c.n == 0) out.push_back("n must be >= 1");
  if (c.height < 16 || c.width < 16)
    out.push_back("height and width (hw) must be >= 16, got " + std::to_string(c.height) +
                  "x" + std::to_string(c.width));
  if (c.height > 4096 || c.width > 4096) out.push_back("height and width must be <= 4096");
  return out;
}

void require_set(std::vector<std::string>& p, const std::filesystem::path& v, const char* name,
                 const char* verb) {
  if (v.empty()) p.push_back(std::string(name) + " is required for " + verb);
}

void check_required(std::vector<std::string> p) {
  if (!p.empty()) throw ConfigError(std::move(p));
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

NoisyDataset read_dataset_arg(const std::filesystem::path& dir, const char* key) {
  if (!std::filesystem::exists(dir / "manifest"))
    throw ConfigError({std::string(key) + ": no dataset manifest under '" + dir.string() + "'"});
  return read_dataset(dir);
}

TrainerState read_state_arg(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "meta"))
    throw ConfigError({"state: no trainer state under '" + dir.string() + "'"});
  return load_state(dir);
}

TrainResult run_training(const ExperimentConfig& cfg, const NoisyDataset& ds) {
  const TrainingSet train = ds.training_view();
  if (cfg.train.batch_size > train.samples.size())
    throw ConfigError({"batch_size must be <= the number of training samples (" +
                       std::to_string(train.samples.size()) + "), got " +
                       std::to_string(cfg.train.batch_size)});
  if (cfg.method == "ce") return train_ce_baseline(train, cfg.train);
  const LatentFieldPrior prior = LatentFieldPrior::uniform(ds.height, ds.width, cfg.mu,
                                                           cfg.sigma, cfg.rho_v, cfg.rho_h);
  return train_eccd(train, prior, cfg.train);
}

void write_training_outputs(const ExperimentConfig& cfg, const TrainResult& res) {
  save_state(res.state, cfg.out / "state");
  write_text(cfg.out / "metrics.csv", metrics_csv(res.metrics));
  KeyValueFile echo = to_values(cfg);
  echo.save(cfg.out / "experiment.cfg");
}

std::string eval_csv(const std::vector<EvalRow>& rows, double& mean_dice, double& mean_iou) {
  std::string out = "sample_id,dice,iou\n";
  std::vector<double> d, j;
  for (const auto& r : rows) {
    out += r.sample_id + "," + format_double(r.dice) + "," + format_double(r.iou) + "\n";
    d.push_back(r.dice);
    j.push_back(r.iou);
  }
  const double n = static_cast<double>(rows.size());
  mean_dice = rows.empty() ? 0.0 : pairwise_sum(d) / n;
  mean_iou = rows.empty() ? 0.0 : pairwise_sum(j) / n;
  out += "mean," + format_double(mean_dice) + "," + format_double(mean_iou) + "\n";
  return out;
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::invalid_argument(join_problems(problems)), problems_(std::move(problems)) {}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    const ExperimentConfig defaults;
    std::vector<ConfigKey> out;
    static std::vector<std::string> storage;  // owns default_value text
    storage.reserve(key_defs().size());
    for (const auto& d : key_defs()) {
      storage.push_back(d.get(defaults).value_or(""));
      out.push_back({d.key.name, storage.back().c_str(), d.key.help});
    }
    return out;
  }();
  return keys;
}

ExperimentConfig ExperimentConfig::from_values(const KeyValueFile& values) {
  std::map<std::string, std::string> last;
  std::vector<std::string> problems;
  for (const auto& [k, v] : values.entries()) last[k] = v;
  for (const auto& [k, v] : last) {
    const bool known = std::any_of(key_defs().begin(), key_defs().end(),
                                   [&](const KeyDef& d) { return k == d.key.name; });
    if (!known) problems.push_back("unknown key '" + k + "'");
  }
  ExperimentConfig cfg;
  for (const auto& d : key_defs()) {
    const auto it = last.find(d.key.name);
    if (it == last.end()) continue;
    try {
      d.set(cfg, it->second);
    } catch (const std::invalid_argument& e) {
      problems.push_back(e.what());
    }
  }
  for (auto& p : semantic_problems(cfg)) problems.push_back(std::move(p));
  if (!problems.empty()) throw ConfigError(std::move(problems));
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& config_file,
                                        const KeyValueFile& overrides) {
  KeyValueFile merged;
  if (!config_file.empty()) {
    if (!std::filesystem::exists(config_file))
      throw ConfigError({"config file '" + config_file.string() + "' does not exist"});
    try {
      merged = KeyValueFile::load(config_file);
    } catch (const std::runtime_error& e) {
      throw ConfigError({e.what()});
    }
  }
  for (const auto& [k, v] : overrides.entries()) merged.add(k, v);
  return from_values(merged);
}

LatentFieldPrior ExperimentConfig::prior() const {
  return LatentFieldPrior::uniform(height, width, mu, sigma, rho_v, rho_h);
}

KeyValueFile to_values(const ExperimentConfig& cfg) {
  KeyValueFile kv;
  for (const auto& d : key_defs())
    if (auto v = d.get(cfg)) kv.add(d.key.name, *v);
  return kv;
}

// ------------------------------------------------------------------ commands

void cmd_generate(const ExperimentConfig& cfg) {
  std::vector<std::string> p;
  require_set(p, cfg.out, "out", "generate");
  check_required(p);
  const NoisyDataset ds = synth_shapes(cfg.n, cfg.height, cfg.width, cfg.train.seed);
  write_dataset(cfg.out, ds);
}

void cmd_add_noise(const ExperimentConfig& cfg) {
  std::vector<std::string> p;
  require_set(p, cfg.data, "data", "add-noise");
  require_set(p, cfg.out, "out", "add-noise");
  check_required(p);
  NoisyDataset ds = read_dataset_arg(cfg.data, "data");
  if (ds.num_classes != 2)
    throw ConfigError({"add-noise: noise families are defined for binary datasets only"});
  ds.provenance.set("noise_family", cfg.family);
  ds.provenance.set("noise_seed", std::to_string(cfg.train.seed));
  if (cfg.family == "morph") {
    ds.provenance.set("alpha", format_double(cfg.alpha));
    ds.provenance.set("beta", format_double(cfg.beta));
  } else {
    ds.provenance.set("phi", format_double(cfg.phi));
    ds.provenance.set("zeta", format_double(cfg.zeta));
    ds.provenance.set("lambda", format_double(cfg.lambda));
  }
  const RandomStream root(cfg.train.seed);
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    NoisySample& s = ds.samples[i];
    if (!s.clean_labels) s.clean_labels = s.observed.noisy_labels;
    RandomStream rng = root.split(i);
    s.observed.noisy_labels =
        cfg.family == "morph"
            ? morph_noise(*s.clean_labels, cfg.alpha, cfg.beta, rng)
            : whu_noise(*s.clean_labels, cfg.phi, cfg.zeta, cfg.lambda, rng);
  }
  write_dataset(cfg.out, ds);
}

void cmd_train(const ExperimentConfig& cfg) {
  std::vector<std::string> p;
  require_set(p, cfg.data, "data", "train");
  require_set(p, cfg.out, "out", "train");
  check_required(p);
  const NoisyDataset ds = read_dataset_arg(cfg.data, "data");
  write_training_outputs(cfg, run_training(cfg, ds));
}

std::vector<EvalRow> evaluate(const PatchLogisticModel& model, const NoisyDataset& ds) {
  std::vector<EvalRow> rows;
  for (const auto& s : ds.samples) {
    if (!s.clean_labels)
      throw ConfigError({"sample '" + s.observed.sample_id + "' has no clean labels"});
    const LabelMap pred = argmax_labels(model.predict_logprobs(s.observed.image),
                                        ds.height, ds.width, model.num_classes());
    rows.push_back({s.observed.sample_id, dice(pred, *s.clean_labels),
                    iou(pred, *s.clean_labels)});
  }
  return rows;
}

double cmd_eval(const ExperimentConfig& cfg) {
  std::vector<std::string> p;
  require_set(p, cfg.state, "state", "eval");
  require_set(p, cfg.data, "data", "eval");
  require_set(p, cfg.out, "out", "eval");
  check_required(p);
  const TrainerState st = read_state_arg(cfg.state);
  const NoisyDataset ds = read_dataset_arg(cfg.data, "data");
  double md = 0.0, mi = 0.0;
  write_text(cfg.out / "eval.csv", eval_csv(evaluate(st.model, ds), md, mi));
  return md;
}

void cmd_sweep_rho(const ExperimentConfig& cfg) {
  std::vector<std::string> p;
  require_set(p, cfg.data, "data", "sweep-rho");
  require_set(p, cfg.out, "out", "sweep-rho");
  check_required(p);
  const NoisyDataset ds = read_dataset_arg(cfg.data, "data");
  const NoisyDataset test =
      cfg.holdout.empty() ? ds : read_dataset_arg(cfg.holdout, "holdout");
  std::string csv = "rho,mean_dice,mean_iou\n";
  for (double rho : cfg.rho_list) {
    ExperimentConfig sub = cfg;
    sub.method = "eccd";
    sub.rho_v = sub.rho_h = rho;
    sub.out = cfg.out / ("rho_" + format_double(rho));
    const TrainResult res = run_training(sub, ds);
    write_training_outputs(sub, res);
    double md = 0.0, mi = 0.0;
    write_text(sub.out / "eval.csv", eval_csv(evaluate(res.state.model, test), md, mi));
    csv += format_double(rho) + "," + format_double(md) + "," + format_double(mi) + "\n";
  }
  write_text(cfg.out / "sweep.csv", csv);
}

LabelMap error_map_image(const LatentFieldPosterior& q) {
  LabelMap out(q.height, q.width, 0);
  for (std::size_t i = 0; i < q.size(); ++i)
    out[i] = static_cast<std::uint8_t>(std::floor(255.0 * sigmoid(q.m[i]) + 0.5));
  return out;
}

void cmd_export_error_map(const ExperimentConfig& cfg) {
  std::vector<std::string> p;
  require_set(p, cfg.state, "state", "export-error-map");
  require_set(p, cfg.out, "out", "export-error-map");
  if (cfg.sample.empty()) p.push_back("sample is required for export-error-map");
  check_required(p);
  const TrainerState st = read_state_arg(cfg.state);
  const auto it = st.posteriors.find(cfg.sample);
  if (it == st.posteriors.end())
    throw ConfigError({"sample: unknown sample id '" + cfg.sample + "'"});
  write_pgm(cfg.out, error_map_image(it->second));
}

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string out = "outer_iter,sample_id,term1,term2,term3,term4,term5,total,wall_ms\n";
  char ms[32];
  for (const auto& r : rows) {
    const ElboBreakdown& b = r.elbo;
    out += std::to_string(r.outer_iter) + "," + r.sample_id + "," + format_double(b.term1);
    if (r.ce_only) {
      out += ",,,,";
    } else {
      for (double t : {b.term2, b.term3, b.term4, b.term5}) out += "," + format_double(t);
    }
    std::snprintf(ms, sizeof ms, "%.3f", r.wall_ms);
    out += "," + format_double(b.total) + "," + ms + "\n";
  }
  return out;
}

}  // namespace eccd
