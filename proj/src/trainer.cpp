#include "eccd/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include "eccd/binary_io.hpp"
#include "eccd/numerics.hpp"

namespace eccd {

// -------------------------------------------------------------------- config

std::vector<std::string> TrainConfig::problems() const {
  std::vector<std::string> out;
  auto positive = [&](const char* name, double v) {
    if (!(v > 0.0) || !std::isfinite(v)) out.push_back(std::string(name) + " must be > 0");
  };
  auto unit_open = [&](const char* name, double v) {
    if (!(v > 0.0 && v < 1.0)) out.push_back(std::string(name) + " must lie in (0, 1)");
  };
  if (k_model_steps == 0) out.push_back("k_model_steps must be >= 1");
  if (max_outer_iters == 0) out.push_back("max_outer_iters must be >= 1");
  if (batch_size == 0) out.push_back("batch_size must be >= 1");
  positive("model_lr", model_lr);
  positive("posterior_lr", posterior_lr);
  positive("transition_lr", transition_lr);
  positive("adam_eps", adam_eps);
  unit_open("beta1", beta1);
  unit_open("beta2", beta2);
  if (quad_order == 0 || quad_order > kMaxQuadratureOrder)
    out.push_back("quad_order must lie in [1, " + std::to_string(kMaxQuadratureOrder) + "]");
  if (patch_radius > 16) out.push_back("patch_radius must be <= 16");
  if (!std::isfinite(m0)) out.push_back("m0 must be finite");
  positive("gamma0", gamma0);
  return out;
}

void TrainConfig::validate() const {
  const auto p = problems();
  if (p.empty()) return;
  std::string msg = "invalid training configuration:";
  for (const auto& s : p) msg += "\n  " + s;
  throw std::invalid_argument(msg);
}

void TrainConfig::write(KeyValueFile& kv) const {
  kv.set("k_model_steps", std::to_string(k_model_steps));
  kv.set("m_posterior_steps", std::to_string(m_posterior_steps));
  kv.set("model_lr", format_double(model_lr));
  kv.set("posterior_lr", format_double(posterior_lr));
  kv.set("transition_lr", format_double(transition_lr));
  kv.set("max_outer_iters", std::to_string(max_outer_iters));
  kv.set("batch_size", std::to_string(batch_size));
  kv.set("seed", std::to_string(seed));
  kv.set("quad_order", std::to_string(quad_order));
  kv.set("beta1", format_double(beta1));
  kv.set("beta2", format_double(beta2));
  kv.set("adam_eps", format_double(adam_eps));
  kv.set("patch_radius", std::to_string(patch_radius));
  kv.set("learn_transitions", learn_transitions ? "true" : "false");
  kv.set("m0", format_double(m0));
  kv.set("gamma0", format_double(gamma0));
}

TrainConfig TrainConfig::read(const KeyValueFile& kv) {
  TrainConfig c;
  auto u = [&](const char* key, auto& field) {
    if (auto v = kv.get(key)) field = static_cast<std::remove_reference_t<decltype(field)>>(parse_u64(key, *v));
  };
  auto r = [&](const char* key, double& field) {
    if (auto v = kv.get(key)) field = parse_double(key, *v);
  };
  u("k_model_steps", c.k_model_steps);
  u("m_posterior_steps", c.m_posterior_steps);
  r("model_lr", c.model_lr);
  r("posterior_lr", c.posterior_lr);
  r("transition_lr", c.transition_lr);
  u("max_outer_iters", c.max_outer_iters);
  u("batch_size", c.batch_size);
  u("seed", c.seed);
  u("quad_order", c.quad_order);
  r("beta1", c.beta1);
  r("beta2", c.beta2);
  r("adam_eps", c.adam_eps);
  u("patch_radius", c.patch_radius);
  if (auto v = kv.get("learn_transitions")) c.learn_transitions = parse_bool("learn_transitions", *v);
  r("m0", c.m0);
  r("gamma0", c.gamma0);
  return c;
}

// ----------------------------------------------------------------- optimiser

void adam_step(AdamState& st, std::span<double> params, std::span<const double> grad,
               double lr, const TrainConfig& cfg) {
  if (st.m.size() != params.size() || grad.size() != params.size())
    throw std::invalid_argument("adam_step: size mismatch");
  ++st.steps;
  const double t = static_cast<double>(st.steps);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    st.m[i] = cfg.beta1 * st.m[i] + (1.0 - cfg.beta1) * grad[i];
    st.v[i] = cfg.beta2 * st.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    params[i] -= lr * (st.m[i] / c1) / (std::sqrt(st.v[i] / c2) + cfg.adam_eps);
  }
}

// --------------------------------------------------------------------- state

bool TrainerState::operator==(const TrainerState& o) const {
  auto same_logits = [](const TransitionMatrix& a, const TransitionMatrix& b) {
    return a.num_classes() == b.num_classes() &&
           std::ranges::equal(a.logits(), b.logits());
  };
  KeyValueFile ca, cb;
  config.write(ca);
  o.config.write(cb);
  return ca.to_string() == cb.to_string() && model == o.model &&
         same_logits(channels.w, o.channels.w) && same_logits(channels.v, o.channels.v) &&
         posteriors == o.posteriors && model_opt == o.model_opt &&
         transition_opt == o.transition_opt && outer_iter == o.outer_iter &&
         method == o.method;
}

TrainerState initial_state(const TrainingSet& dataset, const TrainConfig& config) {
  const std::size_t k = dataset.num_classes;
  PatchLogisticModel model(k, config.patch_radius);
  const std::size_t np = model.parameters().size();
  TrainerState st{config,
                  std::move(model),
                  NoiseChannelPair::uniform(k),
                  {},
                  AdamState(np),
                  AdamState(2 * k * (k - 1)),
                  0,
                  "eccd"};
  for (const auto& s : dataset.samples)
    st.posteriors.emplace(s.sample_id,
                          LatentFieldPosterior::uniform(dataset.height, dataset.width,
                                                        config.m0, config.gamma0));
  return st;
}

std::size_t visit_index(std::uint64_t seed, std::uint64_t t, std::size_t num_samples) {
  return visit_batch(seed, t, num_samples, 1).front();
}

std::vector<std::size_t> visit_batch(std::uint64_t seed, std::uint64_t t,
                                     std::size_t num_samples, std::size_t batch) {
  if (batch == 0 || batch > num_samples)
    throw std::invalid_argument("batch_size " + std::to_string(batch) +
                                " must lie in [1, " + std::to_string(num_samples) + "]");
  // Stream id 0 of the seed is reserved for the visit schedule; partial
  // Fisher-Yates draws without replacement.
  RandomStream rng = RandomStream(seed).split(0).split(t);
  std::vector<std::size_t> perm(num_samples);
  for (std::size_t i = 0; i < num_samples; ++i) perm[i] = i;
  for (std::size_t i = 0; i < batch; ++i)
    std::swap(perm[i], perm[i + static_cast<std::size_t>(rng.below(num_samples - i))]);
  perm.resize(batch);
  return perm;
}

double cross_entropy(std::span<const double> logprobs, const LabelMap& labels,
                     std::size_t k) {
  if (logprobs.size() != labels.size() * k)
    throw std::invalid_argument("cross_entropy: shape mismatch");
  std::vector<double> terms(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= k) throw std::invalid_argument("cross_entropy: label exceeds K");
    terms[i] = -logprobs[i * k + labels[i]];
  }
  return pairwise_sum(terms);
}

// ------------------------------------------------------------------ training

namespace {

using Clock = std::chrono::steady_clock;

void check_dataset(const TrainingSet& ds) {
  if (ds.samples.empty()) throw std::invalid_argument("training needs a non-empty dataset");
  std::vector<std::string> ids;
  for (const auto& s : ds.samples) {
    if (!s.image.same_shape(ds.height, ds.width) ||
        !s.noisy_labels.same_shape(ds.height, ds.width))
      throw std::invalid_argument("sample '" + s.sample_id + "' is not " +
                                  std::to_string(ds.height) + "x" + std::to_string(ds.width));
    for (auto c : s.noisy_labels.data)
      if (c >= ds.num_classes)
        throw std::invalid_argument("sample '" + s.sample_id + "' has a label >= K");
    ids.push_back(s.sample_id);
  }
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
    throw std::invalid_argument("duplicate sample ids in dataset");
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

std::string where(std::uint64_t iter, const std::string& id) {
  return " (outer iteration " + std::to_string(iter) + ", sample '" + id + "')";
}

void require_finite(const ElboBreakdown& b, std::uint64_t iter, const std::string& id) {
  const std::pair<const char*, double> terms[] = {
      {"term1 (expected classifier log-likelihood)", b.term1},
      {"term2 (posterior entropy)", b.term2},
      {"term3 (prior cross term)", b.term3},
      {"term4 (soft-label entropy)", b.term4},
      {"term5 (noise-channel log-likelihood)", b.term5}};
  for (const auto& [name, v] : terms)
    if (!std::isfinite(v)) throw NumericError("non-finite ELBO " + std::string(name) + where(iter, id));
  if (!std::isfinite(b.total)) throw NumericError("non-finite ELBO total" + where(iter, id));
}

// Called when a gradient group is non-finite: blame a term if one is, else
// the group itself.
[[noreturn]] void gradient_failure(const char* group, const ElboInputs& in,
                                   std::span<const double> lp, std::uint64_t iter,
                                   const std::string& id) {
  require_finite(elbo(in, lp), iter, id);
  throw NumericError("non-finite gradient of the " + std::string(group) + where(iter, id));
}

std::vector<double> concat(std::span<const double> a, std::span<const double> b) {
  std::vector<double> out(a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

double elapsed_ms(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

TrainerState start_state(const TrainingSet& ds, const TrainConfig& config,
                         const TrainerState* resume, const char* method) {
  TrainerState st = resume ? *resume : initial_state(ds, config);
  if (resume && st.method != method)
    throw std::invalid_argument(std::string("cannot resume a '") + st.method +
                                "' state with the " + method + " trainer");
  st.config = config;
  st.method = method;
  if (st.model.num_classes() != ds.num_classes)
    throw std::invalid_argument("model class count does not match the dataset");
  return st;
}

}  // namespace

std::vector<double> refine_posterior(LatentFieldPosterior& q, const LabelMap& noisy,
                                     std::span<const double> logprobs,
                                     const LatentFieldPrior& prior,
                                     const NoiseChannelPair& channels,
                                     const QuadratureRule& quad, const TrainConfig& cfg,
                                     std::size_t steps, bool record_totals) {
  const ElboInputs in{noisy, q, prior, channels, quad};
  std::vector<double> totals;
  if (record_totals) totals.push_back(elbo(in, logprobs).total);
  const std::size_t n = q.size();
  AdamState opt(2 * n);
  std::vector<double> params = concat(q.m, q.log_gamma);
  for (std::size_t s = 0; s < steps; ++s) {
    const ElboGradients g = elbo_gradients(in, logprobs, {true, false, false});
    const std::vector<double> grad = concat(g.d_m, g.d_log_gamma);
    if (!all_finite(grad)) {
      require_finite(elbo(in, logprobs), 0, "");
      throw NumericError("non-finite gradient of the posterior parameters");
    }
    adam_step(opt, params, grad, cfg.posterior_lr, cfg);
    std::copy_n(params.begin(), n, q.m.begin());
    std::copy_n(params.begin() + static_cast<std::ptrdiff_t>(n), n, q.log_gamma.begin());
    if (record_totals) totals.push_back(elbo(in, logprobs).total);
  }
  return totals;
}

TrainResult train_eccd(const TrainingSet& dataset, const LatentFieldPrior& prior,
                       const TrainConfig& config, const TrainerState* resume) {
  config.validate();
  check_dataset(dataset);
  if (prior.height() != dataset.height || prior.width() != dataset.width)
    throw std::invalid_argument("prior grid " + std::to_string(prior.height()) + "x" +
                                std::to_string(prior.width()) +
                                " does not match the dataset");
  TrainResult res{start_state(dataset, config, resume, "eccd"), {}};
  TrainerState& st = res.state;
  for (const auto& s : dataset.samples)
    if (!st.posteriors.contains(s.sample_id))
      throw std::invalid_argument("state has no posterior for sample '" +
                                  s.sample_id + "'");
  const QuadratureRule quad = gauss_hermite(config.quad_order);
  const std::size_t kw = st.channels.w.logits().size();

  const double inv_batch = 1.0 / static_cast<double>(config.batch_size);

  while (st.outer_iter < config.max_outer_iters) {
    const auto t0 = Clock::now();
    const std::uint64_t iter = st.outer_iter;
    const auto batch = visit_batch(config.seed, iter, dataset.samples.size(), config.batch_size);

    for (std::size_t k = 0; k < config.k_model_steps; ++k) {
      std::vector<double> gm(st.model.parameters().size(), 0.0);
      std::vector<double> gt(config.learn_transitions ? 2 * kw : 0, 0.0);
      for (std::size_t idx : batch) {
        const TrainingSample& sample = dataset.samples[idx];
        const ElboInputs in{sample.noisy_labels, st.posteriors.at(sample.sample_id), prior,
                            st.channels, quad};
        const std::vector<double> lp = st.model.predict_logprobs(sample.image);
        if (!all_finite(lp))
          throw NumericError("non-finite classifier output feeding term1" + where(iter, sample.sample_id));
        const ElboGradients g =
            elbo_gradients(in, lp, {false, true, config.learn_transitions});
        const std::vector<double> gs = st.model.accumulate_grad(sample.image, g.d_logits);
        if (!all_finite(gs)) gradient_failure("classifier parameters", in, lp, iter, sample.sample_id);
        for (std::size_t j = 0; j < gm.size(); ++j) gm[j] += inv_batch * gs[j];
        if (config.learn_transitions) {
          const std::vector<double> ts = concat(g.d_w_logits, g.d_v_logits);
          if (!all_finite(ts)) gradient_failure("transition logits", in, lp, iter, sample.sample_id);
          for (std::size_t j = 0; j < gt.size(); ++j) gt[j] += inv_batch * ts[j];
        }
      }
      adam_step(st.model_opt, st.model.parameters(), gm, config.model_lr, config);
      if (config.learn_transitions) {
        std::vector<double> logits = concat(st.channels.w.logits(), st.channels.v.logits());
        adam_step(st.transition_opt, logits, gt, config.transition_lr, config);
        st.channels.w.set_logits({logits.begin(), logits.begin() + static_cast<std::ptrdiff_t>(kw)});
        st.channels.v.set_logits({logits.begin() + static_cast<std::ptrdiff_t>(kw), logits.end()});
      }
    }

    std::vector<std::pair<std::string, ElboBreakdown>> rows;
    for (std::size_t idx : batch) {
      const TrainingSample& sample = dataset.samples[idx];
      LatentFieldPosterior& q = st.posteriors.at(sample.sample_id);
      const std::vector<double> lp = st.model.predict_logprobs(sample.image);
      if (config.m_posterior_steps > 0) {
        try {
          refine_posterior(q, sample.noisy_labels, lp, prior, st.channels, quad, config,
                           config.m_posterior_steps, false);
        } catch (const NumericError& e) {
          throw NumericError(e.what() + where(iter, sample.sample_id));
        }
      }
      const ElboBreakdown b = elbo({sample.noisy_labels, q, prior, st.channels, quad}, lp);
      require_finite(b, iter, sample.sample_id);
      rows.emplace_back(sample.sample_id, b);
    }
    ++st.outer_iter;
    const double ms = elapsed_ms(t0);
    for (const auto& [id, b] : rows) res.metrics.push_back({iter, id, b, false, ms});
  }
  return res;
}

TrainResult train_ce_baseline(const TrainingSet& dataset, const TrainConfig& config,
                              const TrainerState* resume) {
  config.validate();
  check_dataset(dataset);
  TrainResult res{start_state(dataset, config, resume, "ce"), {}};
  TrainerState& st = res.state;
  if (!resume) st.posteriors.clear();
  const std::size_t k = dataset.num_classes;

  const double inv_batch = 1.0 / static_cast<double>(config.batch_size);

  while (st.outer_iter < config.max_outer_iters) {
    const auto t0 = Clock::now();
    const std::uint64_t iter = st.outer_iter;
    const auto batch = visit_batch(config.seed, iter, dataset.samples.size(), config.batch_size);

    for (std::size_t s = 0; s < config.k_model_steps; ++s) {
      std::vector<double> gm(st.model.parameters().size(), 0.0);
      for (std::size_t idx : batch) {
        const TrainingSample& sample = dataset.samples[idx];
        const LabelMap& y = sample.noisy_labels;
        const std::vector<double> lp = st.model.predict_logprobs(sample.image);
        if (!all_finite(lp))
          throw NumericError("non-finite classifier output" + where(iter, sample.sample_id));
        std::vector<double> d(lp.size());
        for (std::size_t i = 0; i < y.size(); ++i)
          for (std::size_t c = 0; c < k; ++c)
            d[i * k + c] = std::exp(lp[i * k + c]) - (y[i] == c ? 1.0 : 0.0);
        const std::vector<double> gs = st.model.accumulate_grad(sample.image, d);
        if (!all_finite(gs))
          throw NumericError("non-finite cross-entropy gradient" + where(iter, sample.sample_id));
        for (std::size_t j = 0; j < gm.size(); ++j) gm[j] += inv_batch * gs[j];
      }
      adam_step(st.model_opt, st.model.parameters(), gm, config.model_lr, config);
    }

    std::vector<std::pair<std::string, ElboBreakdown>> rows;
    for (std::size_t idx : batch) {
      const TrainingSample& sample = dataset.samples[idx];
      const double ce = cross_entropy(st.model.predict_logprobs(sample.image), sample.noisy_labels, k);
      if (!std::isfinite(ce))
        throw NumericError("non-finite cross-entropy loss" + where(iter, sample.sample_id));
      ElboBreakdown b;
      b.term1 = -ce;
      b.total = -ce;
      rows.emplace_back(sample.sample_id, b);
    }
    ++st.outer_iter;
    const double ms = elapsed_ms(t0);
    for (const auto& [id, b] : rows) res.metrics.push_back({iter, id, b, true, ms});
  }
  return res;
}

// ----------------------------------------------------------------------- I/O

namespace {

constexpr std::string_view kTransitionMagic = "ECCDTRN1";
constexpr std::string_view kOptimizerMagic = "ECCDOPT1";

bool safe_id(const std::string& id) {
  return !id.empty() && id != "." && id != ".." &&
         std::all_of(id.begin(), id.end(), [](char ch) {
           return std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-' ||
                  ch == '.';
         });
}

void write_u64(ByteWriter& w, std::uint64_t v) {
  w.u32(static_cast<std::uint32_t>(v & 0xffffffffu));
  w.u32(static_cast<std::uint32_t>(v >> 32));
}

std::uint64_t read_u64(ByteReader& r) {
  const std::uint64_t lo = r.u32();
  const std::uint64_t hi = r.u32();
  return lo | (hi << 32);
}

void write_adam(ByteWriter& w, const AdamState& s) {
  write_u64(w, s.steps);
  w.u32(static_cast<std::uint32_t>(s.m.size()));
  w.f64s(s.m);
  w.f64s(s.v);
}

AdamState read_adam(ByteReader& r) {
  AdamState s;
  s.steps = read_u64(r);
  const std::size_t n = r.u32();
  s.m = r.f64s(n);
  s.v = r.f64s(n);
  return s;
}

}  // namespace

void save_state(const TrainerState& st, const std::filesystem::path& dir) {
  for (const auto& [id, q] : st.posteriors)
    if (!safe_id(id)) throw std::invalid_argument("sample id '" + id + "' is not a safe file name");
  std::filesystem::create_directories(dir / "posteriors");

  save_model(st.model, dir / "model.bin");

  ByteWriter tw;
  tw.magic(kTransitionMagic);
  tw.u32(static_cast<std::uint32_t>(st.channels.w.num_classes()));
  for (double x : st.channels.w.logits()) tw.f64(x);
  for (double x : st.channels.v.logits()) tw.f64(x);
  tw.save(dir / "transitions.bin");

  ByteWriter ow;
  ow.magic(kOptimizerMagic);
  write_adam(ow, st.model_opt);
  write_adam(ow, st.transition_opt);
  ow.save(dir / "optimizer.bin");

  KeyValueFile meta;
  meta.add("format", "eccd-state-1");
  meta.add("method", st.method);
  meta.add("outer_iter", std::to_string(st.outer_iter));
  st.config.write(meta);
  for (const auto& [id, q] : st.posteriors) {
    save_posterior(q, dir / "posteriors" / (id + ".bin"));
    meta.add("sample", id);
  }
  meta.save(dir / "meta");
}

TrainerState load_state(const std::filesystem::path& dir) {
  const KeyValueFile meta = KeyValueFile::load(dir / "meta");
  if (meta.get("format") != "eccd-state-1")
    throw FormatError((dir / "meta").string() + ": unknown state format or version");
  const TrainConfig config = TrainConfig::read(meta);

  PatchLogisticModel model = load_model(dir / "model.bin");
  const std::size_t k = model.num_classes();

  ByteReader tr = ByteReader::open(dir / "transitions.bin");
  tr.expect_magic(kTransitionMagic);
  if (tr.u32() != k)
    throw FormatError((dir / "transitions.bin").string() + ": class count differs from model");
  std::vector<double> wl = tr.f64s(k * (k - 1));
  std::vector<double> vl = tr.f64s(k * (k - 1));
  tr.expect_end();

  ByteReader orr = ByteReader::open(dir / "optimizer.bin");
  orr.expect_magic(kOptimizerMagic);
  AdamState mopt = read_adam(orr);
  AdamState topt = read_adam(orr);
  orr.expect_end();
  if (mopt.m.size() != model.parameters().size() || topt.m.size() != 2 * k * (k - 1))
    throw FormatError((dir / "optimizer.bin").string() + ": moment sizes do not match model");

  std::map<std::string, LatentFieldPosterior> posteriors;
  for (const std::string& id : meta.get_all("sample")) {
    if (!safe_id(id)) throw FormatError("meta lists unsafe sample id '" + id + "'");
    posteriors.emplace(id, load_posterior(dir / "posteriors" / (id + ".bin")));
  }

  TrainerState st{config,
                  std::move(model),
                  {TransitionMatrix(k, std::move(wl)), TransitionMatrix(k, std::move(vl))},
                  std::move(posteriors),
                  std::move(mopt),
                  std::move(topt),
                  0,
                  meta.require("method")};
  try {
    st.outer_iter = std::stoull(meta.require("outer_iter"));
  } catch (const std::invalid_argument&) {
    throw FormatError((dir / "meta").string() + ": bad outer_iter");
  }
  return st;
}

}  // namespace eccd
