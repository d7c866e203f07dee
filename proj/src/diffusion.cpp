#include "tsdiff/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace tsdiff {

void TrainConfig::validate() const {
  if (iterations < 1) throw ConfigError("train.iterations must be >= 1");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("train.learning_rate must be > 0");
  if (!(ema_decay >= 0.0 && ema_decay < 1.0)) throw ConfigError("train.ema_decay must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("train.weight_decay must be >= 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0))
    throw ConfigError("Adam betas must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("train.adam_eps must be > 0");
}

Checkpoint::Checkpoint(DenoiserConfig dcfg, TrainConfig tcfg, Resolution res, NoiseSchedule ns, ScalingParams sp)
    : denoiser(dcfg),
      train(tcfg),
      resolution(res),
      schedule(std::move(ns)),
      scaling(sp),
      params(dcfg),
      ema(dcfg),
      adam_m(Vector::Zero(static_cast<Eigen::Index>(parameter_count(dcfg)))),
      adam_v(Vector::Zero(static_cast<Eigen::Index>(parameter_count(dcfg)))) {}

Checkpoint initial_checkpoint(const DenoiserConfig& dcfg, const TrainConfig& tcfg, Resolution res,
                              const NoiseSchedule& ns, const ScalingParams& sp) {
  dcfg.validate();
  tcfg.validate();
  Checkpoint ck(dcfg, tcfg, res, ns, sp);
  Rng init(tcfg.seed, 0);
  ck.params = DenoiserParams::initialize(dcfg, init);
  ck.ema = ck.params;
  ck.rng_state = Rng(tcfg.seed, 1).state();
  return ck;
}

// --- training ---------------------------------------------------------------

Trainer::Trainer(const ProfileSet& data, Checkpoint ckpt)
    : ckpt_(std::move(ckpt)), data_(data.data()), net_(ckpt_.denoiser) {
  ckpt_.train.validate();
  const auto width = ckpt_.denoiser.seq_len * ckpt_.denoiser.in_channels;
  if (data.steps() != width)
    throw ShapeError("training data has T = " + std::to_string(data.steps()) + " but the model expects " +
                     std::to_string(width));
  if (data.empty()) throw std::invalid_argument("training data is empty");
  if (data_.cwiseAbs().maxCoeff() > 1.0 + 1e-9) throw std::invalid_argument("training data must be scaled to [-1, 1]");
  rng_.set_state(ckpt_.rng_state);
}

double Trainer::step() {
  const auto n = static_cast<std::uint64_t>(data_.rows());
  RowMatrix batch(static_cast<Eigen::Index>(ckpt_.train.batch_size), data_.cols());
  for (Eigen::Index i = 0; i < batch.rows(); ++i) batch.row(i) = data_.row(static_cast<Eigen::Index>(rng_.below(n)));
  LossResult res;
  try {
    res = loss_simple(net_, ckpt_.params, batch, ckpt_.schedule, rng_, ckpt_.train.posterior_variance);
  } catch (const NumericError& e) {
    throw NumericError("iteration " + std::to_string(ckpt_.iteration + 1) + ": " + e.what(), e.step());
  }
  apply(res);
  return res.loss;
}

double Trainer::step_on(const RowMatrix& batch, std::span<const std::size_t> steps, const RowMatrix& noise) {
  const auto res = loss_with(net_, ckpt_.params, batch, steps, noise, ckpt_.schedule, ckpt_.train.posterior_variance);
  apply(res);
  return res.loss;
}

void Trainer::apply(const LossResult& res) {
  const auto& tc = ckpt_.train;
  Vector g = res.grad;
  if (!g.allFinite())
    throw NumericError("non-finite gradient at iteration " + std::to_string(ckpt_.iteration + 1),
                       static_cast<long long>(ckpt_.iteration + 1));
  const double norm = g.norm();
  if (tc.grad_clip > 0.0 && norm > tc.grad_clip) g *= tc.grad_clip / norm;

  const auto t = static_cast<double>(++ckpt_.iteration);
  auto& theta = ckpt_.params.values();
  ckpt_.adam_m = tc.adam_beta1 * ckpt_.adam_m + (1.0 - tc.adam_beta1) * g;
  ckpt_.adam_v = tc.adam_beta2 * ckpt_.adam_v + (1.0 - tc.adam_beta2) * g.cwiseProduct(g);
  const double c1 = 1.0 - std::pow(tc.adam_beta1, t);
  const double c2 = 1.0 - std::pow(tc.adam_beta2, t);
  theta *= 1.0 - tc.learning_rate * tc.weight_decay;
  theta.array() -= tc.learning_rate * (ckpt_.adam_m.array() / c1) /
                   ((ckpt_.adam_v.array() / c2).sqrt() + tc.adam_eps);

  auto& ema = ckpt_.ema.values();
  ema = tc.ema_decay * ema + (1.0 - tc.ema_decay) * theta;
  ckpt_.rng_state = rng_.state();
}

void Trainer::run(const std::function<void(std::size_t, double)>& on_step) {
  while (ckpt_.iteration < ckpt_.train.iterations) {
    const double loss = step();
    if (on_step) on_step(ckpt_.iteration, loss);
  }
}

Checkpoint train(const ProfileSet& scaled, const DenoiserConfig& dcfg, const TrainConfig& tcfg,
                 const NoiseSchedule& ns, const ScalingParams& sp,
                 const std::function<void(std::size_t, double)>& on_step) {
  Trainer tr(scaled, initial_checkpoint(dcfg, tcfg, scaled.resolution(), ns, sp));
  tr.run(on_step);
  return tr.checkpoint();
}

// --- checkpoint I/O ---------------------------------------------------------

namespace {

void put_params(Container& c, const std::string& prefix, const ParamLayout& layout, const Vector& flat) {
  for (const auto& t : layout.tensors()) {
    std::vector<std::uint64_t> shape(t.shape.begin(), t.shape.end());
    const double* p = flat.data() + t.offset;
    c.add(prefix + t.name, std::move(shape), std::vector<double>(p, p + t.size));
  }
}

void get_params(const Container& c, const std::string& prefix, const ParamLayout& layout, Vector& flat) {
  flat.resize(static_cast<Eigen::Index>(layout.total_size()));
  for (const auto& t : layout.tensors()) {
    const auto& src = c.tensor(prefix + t.name);
    if (!std::equal(src.shape.begin(), src.shape.end(), t.shape.begin(), t.shape.end()))
      throw FormatError("tensor '" + src.name + "' has the wrong shape for this config");
    std::copy(src.data.begin(), src.data.end(), flat.data() + t.offset);
  }
}

template <typename F>
auto meta_value(const std::string& key, F&& f) {
  try {
    return f();
  } catch (const std::invalid_argument& e) {
    throw FormatError("metadata '" + key + "': " + e.what());
  }
}

}  // namespace

Container checkpoint_to_container(const Checkpoint& ck) {
  Container c;
  c.set("kind", std::string("checkpoint"));
  const auto& d = ck.denoiser;
  c.set("denoiser.seq_len", std::uint64_t{d.seq_len});
  c.set("denoiser.in_channels", std::uint64_t{d.in_channels});
  c.set("denoiser.fold", std::uint64_t{d.fold});
  c.set("denoiser.d_model", std::uint64_t{d.d_model});
  c.set("denoiser.layers", std::uint64_t{d.layers});
  c.set("denoiser.heads", std::uint64_t{d.heads});
  c.set("denoiser.kernel_half_width", std::uint64_t{d.kernel_half_width});
  c.set("denoiser.ffn_mult", std::uint64_t{d.ffn_mult});
  c.set("denoiser.block_variant", std::string(to_string(d.block_variant)));
  const auto& t = ck.train;
  c.set("train.iterations", std::uint64_t{t.iterations});
  c.set("train.batch_size", std::uint64_t{t.batch_size});
  c.set("train.learning_rate", t.learning_rate);
  c.set("train.ema_decay", t.ema_decay);
  c.set("train.seed", t.seed);
  c.set("train.posterior_variance", std::string(to_string(t.posterior_variance)));
  c.set("train.weight_decay", t.weight_decay);
  c.set("train.adam_beta1", t.adam_beta1);
  c.set("train.adam_beta2", t.adam_beta2);
  c.set("train.adam_eps", t.adam_eps);
  c.set("train.grad_clip", t.grad_clip);
  c.set("resolution", to_string(ck.resolution));
  c.set("scaling.min", ck.scaling.min_val);
  c.set("scaling.max", ck.scaling.max_val);
  c.set("schedule.steps", std::uint64_t{ck.schedule.steps()});
  c.set("iteration", std::uint64_t{ck.iteration});
  c.set("rng_state", ck.rng_state);

  c.add("schedule.beta", {ck.schedule.steps()}, ck.schedule.betas());
  const ParamLayout layout(d);
  put_params(c, "theta/", layout, ck.params.values());
  put_params(c, "ema/", layout, ck.ema.values());
  put_params(c, "adam_m/", layout, ck.adam_m);
  put_params(c, "adam_v/", layout, ck.adam_v);
  return c;
}

Checkpoint checkpoint_from_container(const Container& c) {
  if (c.get("kind") != "checkpoint") throw FormatError("file is a '" + c.get("kind") + "', not a checkpoint");
  DenoiserConfig d;
  d.seq_len = c.get_u64("denoiser.seq_len");
  d.in_channels = c.get_u64("denoiser.in_channels");
  d.fold = c.get_u64("denoiser.fold");
  d.d_model = c.get_u64("denoiser.d_model");
  d.layers = c.get_u64("denoiser.layers");
  d.heads = c.get_u64("denoiser.heads");
  d.kernel_half_width = c.get_u64("denoiser.kernel_half_width");
  d.ffn_mult = c.get_u64("denoiser.ffn_mult");
  d.block_variant = meta_value("denoiser.block_variant",
                               [&] { return parse_block_variant(c.get("denoiser.block_variant")); });
  meta_value("denoiser", [&] { d.validate(); return 0; });
  TrainConfig t;
  t.iterations = c.get_u64("train.iterations");
  t.batch_size = c.get_u64("train.batch_size");
  t.learning_rate = c.get_double("train.learning_rate");
  t.ema_decay = c.get_double("train.ema_decay");
  t.seed = c.get_u64("train.seed");
  t.posterior_variance = meta_value("train.posterior_variance",
                                    [&] { return parse_posterior_variance(c.get("train.posterior_variance")); });
  t.weight_decay = c.get_double("train.weight_decay");
  t.adam_beta1 = c.get_double("train.adam_beta1");
  t.adam_beta2 = c.get_double("train.adam_beta2");
  t.adam_eps = c.get_double("train.adam_eps");
  t.grad_clip = c.get_double("train.grad_clip");
  const auto res = meta_value("resolution", [&] { return parse_resolution(c.get("resolution")); });
  const ScalingParams sp{c.get_double("scaling.min"), c.get_double("scaling.max")};

  const auto& beta = c.tensor("schedule.beta");
  if (beta.data.size() != c.get_u64("schedule.steps")) throw FormatError("schedule length mismatch");
  auto ns = meta_value("schedule.beta", [&] { return NoiseSchedule::from_betas(beta.data); });

  Checkpoint ck(d, t, res, std::move(ns), sp);
  const ParamLayout layout(d);
  get_params(c, "theta/", layout, ck.params.values());
  get_params(c, "ema/", layout, ck.ema.values());
  get_params(c, "adam_m/", layout, ck.adam_m);
  get_params(c, "adam_v/", layout, ck.adam_v);
  ck.iteration = c.get_u64("iteration");
  ck.rng_state = c.get("rng_state");
  meta_value("rng_state", [&] { Rng probe; probe.set_state(ck.rng_state); return 0; });
  return ck;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  checkpoint_to_container(ckpt).write(path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return checkpoint_from_container(Container::read(path));
}

// --- sampling ---------------------------------------------------------------

std::vector<std::size_t> strided_steps(std::size_t total, std::size_t n_steps) {
  if (n_steps < 1 || n_steps > total)
    throw std::invalid_argument("sampler steps must lie in [1, " + std::to_string(total) + "], got " +
                                std::to_string(n_steps));
  std::vector<std::size_t> out(n_steps);
  for (std::size_t i = 1; i <= n_steps; ++i) out[i - 1] = i * total / n_steps;
  return out;
}

namespace {

struct ReverseStep {
  std::size_t step;  // model step evaluated (current kept step)
  bool direct;       // previous kept step is step - 1
  double cx0 = 0, cxs = 0, var = 0;
};

std::vector<ReverseStep> plan(const NoiseSchedule& ns, std::size_t n_steps, PosteriorVariance kind) {
  const auto kept = strided_steps(ns.steps(), n_steps);
  std::vector<ReverseStep> out;
  for (std::size_t i = 0; i < kept.size(); ++i) {
    const std::size_t c = kept[i], p = i == 0 ? 0 : kept[i - 1];
    ReverseStep r{c, c - p == 1};
    if (r.direct) {
      r.var = ns.variance(c, kind);
    } else {
      const double ab_c = ns.alpha_bar(c), ab_p = ns.alpha_bar(p);
      const double beta = 1.0 - ab_c / ab_p;
      r.cx0 = std::sqrt(ab_p) * beta / (1.0 - ab_c);
      r.cxs = std::sqrt(1.0 - beta) * (1.0 - ab_p) / (1.0 - ab_c);
      const double tilde = p == 0 ? beta : beta * (1.0 - ab_p) / (1.0 - ab_c);
      r.var = kind == PosteriorVariance::Beta ? beta : tilde;
    }
    out.push_back(r);
  }
  return out;
}

}  // namespace

RowMatrix sample_strided_with(const MeanFunction& mean, const NoiseSchedule& ns, std::size_t m,
                              std::size_t width, std::size_t n_steps, std::uint64_t seed,
                              const SampleOptions& opt) {
  const auto steps = plan(ns, n_steps, opt.variance);
  const auto w = static_cast<Eigen::Index>(width);
  RowMatrix out(static_cast<Eigen::Index>(m), w);
  const std::size_t chunk = std::max<std::size_t>(1, opt.chunk_rows);

  for (std::size_t r0 = 0; r0 < m; r0 += chunk) {
    const std::size_t rows = std::min(chunk, m - r0);
    std::vector<Rng> rngs;
    rngs.reserve(rows);
    RowMatrix x(static_cast<Eigen::Index>(rows), w);
    for (std::size_t i = 0; i < rows; ++i) {
      rngs.emplace_back(seed, r0 + i);
      for (Eigen::Index j = 0; j < w; ++j) x(static_cast<Eigen::Index>(i), j) = rngs[i].normal();
    }
    std::vector<std::size_t> row_steps(rows);
    for (std::size_t k = steps.size(); k-- > 0;) {
      const auto& st = steps[k];
      std::fill(row_steps.begin(), row_steps.end(), st.step);
      RowMatrix mu = mean(x, row_steps);
      if (!st.direct) {
        const RowMatrix x0 = (mu - ns.coef_xs(st.step) * x) / ns.coef_x0(st.step);
        mu = st.cx0 * x0 + st.cxs * x;
      }
      if (k == 0 && !opt.final_step_noise) {
        x = std::move(mu);
        continue;
      }
      const double sd = std::sqrt(st.var);
      for (std::size_t i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < w; ++j)
          x(static_cast<Eigen::Index>(i), j) = mu(static_cast<Eigen::Index>(i), j) + sd * rngs[i].normal();
    }
    if (!x.allFinite()) throw NumericError("sampler produced non-finite values");
    out.middleRows(static_cast<Eigen::Index>(r0), static_cast<Eigen::Index>(rows)) = x;
  }
  return out;
}

RowMatrix sample_with(const MeanFunction& mean, const NoiseSchedule& ns, std::size_t m, std::size_t width,
                      std::uint64_t seed, const SampleOptions& opt) {
  return sample_strided_with(mean, ns, m, width, ns.steps(), seed, opt);
}

MeanFunction model_mean(const Checkpoint& ckpt, bool use_ema) {
  auto net = std::make_shared<const Denoiser>(ckpt.denoiser);
  auto params = std::make_shared<const DenoiserParams>(use_ema ? ckpt.ema : ckpt.params);
  return [net, params](const RowMatrix& xs, std::span<const std::size_t> steps) {
    return net->forward(*params, xs, steps);
  };
}

namespace {

SampleOptions resolve(const Checkpoint& ck, const std::optional<SampleOptions>& opt) {
  if (opt) return *opt;
  SampleOptions o;
  o.variance = ck.train.posterior_variance;
  return o;
}

}  // namespace

ProfileSet sample(const Checkpoint& ckpt, std::size_t m, std::uint64_t seed, std::optional<SampleOptions> opt) {
  return sample_strided(ckpt, m, ckpt.schedule.steps(), seed, opt);
}

ProfileSet sample_strided(const Checkpoint& ckpt, std::size_t m, std::size_t n_steps, std::uint64_t seed,
                          std::optional<SampleOptions> opt) {
  const auto o = resolve(ckpt, opt);
  const auto width = ckpt.denoiser.seq_len * ckpt.denoiser.in_channels;
  return ProfileSet(sample_strided_with(model_mean(ckpt, o.use_ema), ckpt.schedule, m, width, n_steps, seed, o),
                    ckpt.resolution);
}

}  // namespace tsdiff
