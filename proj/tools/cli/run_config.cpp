#include "cli/run_config.hpp"

#include "tsdiff/container.hpp"

#include <fstream>
#include <sstream>

namespace tsdiff::cli {

namespace {

enum class Kind { U64, Double, Bool, String, Resolution, Variance, Block, OptVariance };

struct KeySpec {
  const char* key;
  const char* value;
  Kind kind;
};

// clang-format off
constexpr KeySpec kKeys[] = {
  {"seed", "0", Kind::U64},
  {"data.resolution", "1hour", Kind::Resolution},
  {"data.header", "false", Kind::Bool},

  {"denoiser.fold", "1", Kind::U64},
  {"denoiser.d_model", "64", Kind::U64},
  {"denoiser.layers", "2", Kind::U64},
  {"denoiser.heads", "4", Kind::U64},
  {"denoiser.kernel_half_width", "3", Kind::U64},
  {"denoiser.ffn_mult", "4", Kind::U64},
  {"denoiser.block_variant", "as_printed", Kind::Block},

  {"schedule.steps", "4000", Kind::U64},

  {"train.input", "", Kind::String},
  {"train.iterations", "1000", Kind::U64},
  {"train.batch_size", "64", Kind::U64},
  {"train.learning_rate", "0.0001", Kind::Double},
  {"train.ema_decay", "0.999", Kind::Double},
  {"train.posterior_variance", "beta_tilde", Kind::Variance},
  {"train.weight_decay", "0.01", Kind::Double},
  {"train.adam_beta1", "0.9", Kind::Double},
  {"train.adam_beta2", "0.999", Kind::Double},
  {"train.adam_eps", "1e-08", Kind::Double},
  {"train.grad_clip", "1", Kind::Double},

  {"generate.checkpoint", "", Kind::String},
  {"generate.count", "100", Kind::U64},
  {"generate.steps", "0", Kind::U64},
  {"generate.final_step_noise", "false", Kind::Bool},
  {"generate.use_ema", "true", Kind::Bool},
  {"generate.variance", "", Kind::OptVariance},
  {"generate.chunk_rows", "256", Kind::U64},

  {"calibrate.real", "", Kind::String},
  {"calibrate.synthetic", "", Kind::String},
  {"calibrate.save_calibrator", "", Kind::String},
  {"calibrate.interpolate", "false", Kind::Bool},

  {"evaluate.real", "", Kind::String},
  {"evaluate.synthetic", "", Kind::String},
  {"metrics.repeats", "10", Kind::U64},
  {"metrics.subset_size", "0", Kind::U64},
  {"metrics.kl_bins", "64", Kind::U64},
  {"metrics.kl_eps", "1e-10", Kind::Double},
  {"metrics.mmd_bandwidth", "0", Kind::Double},

  {"gmm.input", "", Kind::String},
  {"gmm.from_model", "", Kind::String},
  {"gmm.components", "10", Kind::U64},
  {"gmm.count", "1000", Kind::U64},
  {"gmm.max_iters", "500", Kind::U64},
  {"gmm.tol", "1e-06", Kind::Double},
  {"gmm.allow_large", "false", Kind::Bool},

  {"synth.count", "2000", Kind::U64},
};
// clang-format on

const KeySpec* find_key(const std::string& key) {
  for (const auto& k : kKeys)
    if (key == k.key) return &k;
  return nullptr;
}

void check_value(const KeySpec& spec, const std::string& value) {
  auto bad = [&](const std::string& what) {
    throw ConfigError("config key '" + std::string(spec.key) + "': " + what + ", got '" + value + "'");
  };
  try {
    switch (spec.kind) {
      case Kind::U64: parse_u64(value); break;
      case Kind::Double: parse_double(value); break;
      case Kind::Bool:
        if (value != "true" && value != "false") bad("expected true or false");
        break;
      case Kind::String: break;
      case Kind::Resolution: parse_resolution(value); break;
      case Kind::Variance: parse_posterior_variance(value); break;
      case Kind::OptVariance:
        if (!value.empty()) parse_posterior_variance(value);
        break;
      case Kind::Block: parse_block_variant(value); break;
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    bad(e.what());
  }
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

const std::map<std::string, std::string>& RunConfig::defaults() {
  static const std::map<std::string, std::string> d = [] {
    std::map<std::string, std::string> m;
    for (const auto& k : kKeys) m[k.key] = k.value;
    return m;
  }();
  return d;
}

RunConfig::RunConfig() : values_(defaults()) {}

void RunConfig::set(const std::string& key, const std::string& value) {
  const KeySpec* spec = find_key(key);
  if (!spec) throw ConfigError("unknown config key '" + key + "'");
  check_value(*spec, value);
  values_[key] = value;
}

void RunConfig::set_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + assignment + "'");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

RunConfig RunConfig::from_text(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    try {
      cfg.set_assignment(line);
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str(), path.string());
}

const std::string& RunConfig::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
  return out;
}

std::uint64_t RunConfig::get_u64(const std::string& key) const { return parse_u64(get(key)); }
double RunConfig::get_double(const std::string& key) const { return parse_double(get(key)); }
bool RunConfig::get_bool(const std::string& key) const { return get(key) == "true"; }

Resolution RunConfig::resolution() const { return parse_resolution(get("data.resolution")); }

DenoiserConfig RunConfig::denoiser() const {
  DenoiserConfig d;
  d.seq_len = steps_per_day(resolution());
  d.fold = get_u64("denoiser.fold");
  d.d_model = get_u64("denoiser.d_model");
  d.layers = get_u64("denoiser.layers");
  d.heads = get_u64("denoiser.heads");
  d.kernel_half_width = get_u64("denoiser.kernel_half_width");
  d.ffn_mult = get_u64("denoiser.ffn_mult");
  d.block_variant = parse_block_variant(get("denoiser.block_variant"));
  try {
    d.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return d;
}

TrainConfig RunConfig::train() const {
  TrainConfig t;
  t.iterations = get_u64("train.iterations");
  t.batch_size = get_u64("train.batch_size");
  t.learning_rate = get_double("train.learning_rate");
  t.ema_decay = get_double("train.ema_decay");
  t.seed = seed();
  t.posterior_variance = parse_posterior_variance(get("train.posterior_variance"));
  t.weight_decay = get_double("train.weight_decay");
  t.adam_beta1 = get_double("train.adam_beta1");
  t.adam_beta2 = get_double("train.adam_beta2");
  t.adam_eps = get_double("train.adam_eps");
  t.grad_clip = get_double("train.grad_clip");
  t.validate();
  return t;
}

SampleOptions RunConfig::sample_options(PosteriorVariance trained_with) const {
  SampleOptions o;
  o.final_step_noise = get_bool("generate.final_step_noise");
  o.use_ema = get_bool("generate.use_ema");
  const auto& v = get("generate.variance");
  o.variance = v.empty() ? trained_with : parse_posterior_variance(v);
  o.chunk_rows = get_u64("generate.chunk_rows");
  if (o.chunk_rows == 0) throw ConfigError("generate.chunk_rows must be positive");
  return o;
}

CalibrationOptions RunConfig::calibration() const {
  CalibrationOptions c;
  c.interpolate = get_bool("calibrate.interpolate");
  return c;
}

MetricConfig RunConfig::metrics() const {
  MetricConfig m;
  m.repeats = get_u64("metrics.repeats");
  if (m.repeats == 0) throw ConfigError("metrics.repeats must be positive");
  if (const auto k = get_u64("metrics.subset_size"); k > 0) m.subset_size = k;
  m.kl_bins = get_u64("metrics.kl_bins");
  if (m.kl_bins < 2) throw ConfigError("metrics.kl_bins must be at least 2");
  m.kl_eps = get_double("metrics.kl_eps");
  if (const double h = get_double("metrics.mmd_bandwidth"); h > 0) m.mmd_bandwidth = h;
  m.seed = seed();
  return m;
}

GmmConfig RunConfig::gmm() const {
  GmmConfig g;
  g.components = get_u64("gmm.components");
  if (g.components == 0) throw ConfigError("gmm.components must be positive");
  g.max_iters = get_u64("gmm.max_iters");
  g.tol = get_double("gmm.tol");
  g.seed = seed();
  g.allow_large = get_bool("gmm.allow_large");
  return g;
}

}  // namespace tsdiff::cli
