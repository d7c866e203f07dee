#include "cli/commands.hpp"

#include "cli/svg.hpp"
#include "tsdiff/synthetic.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>

namespace tsdiff::cli {

namespace fs = std::filesystem;

namespace {

std::ostream& log_of(const CommandContext& ctx) { return ctx.log ? *ctx.log : std::cout; }

void write_text_atomic(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write '" + tmp.string() + "'");
    f << text;
    if (!f.flush()) throw Error("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

void write_csv_atomic(const fs::path& path, const RowMatrix& data) {
  const fs::path tmp = path.string() + ".tmp";
  write_csv(tmp, data);
  fs::rename(tmp, path);
}

std::string matrix_csv(const Matrix& m) {
  std::string out;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out += (j ? "," : "") + format_double(m(i, j));
    out += "\n";
  }
  return out;
}

fs::path prepare_out(const CommandContext& ctx) {
  fs::create_directories(ctx.out_dir);
  return ctx.out_dir;
}

void write_sidecar(const CommandContext& ctx) {
  write_text_atomic(ctx.out_dir / "resolved_config.txt", ctx.config.to_text());
}

std::string require_path(const RunConfig& cfg, const std::string& key, const std::string& flag) {
  const auto& p = cfg.get(key);
  if (p.empty()) throw ConfigError("missing input: set " + key + " (" + flag + ")");
  return p;
}

ProfileSet load_profiles(const RunConfig& cfg, const std::string& path) {
  try {
    return load_csv(path, cfg.resolution(), cfg.header());
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what(), e.row(), e.column());
  }
}

std::vector<double> column(const RowMatrix& m, Eigen::Index t) {
  std::vector<double> c(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) c[static_cast<std::size_t>(i)] = m(i, t);
  return c;
}

}  // namespace

void cmd_train(const CommandContext& ctx) {
  const auto& cfg = ctx.config;
  const auto input = require_path(cfg, "train.input", "--input");
  const auto dcfg = cfg.denoiser();
  const auto tcfg = cfg.train();
  const auto ps = load_profiles(cfg, input);
  if (ps.size() == 0) throw Error("training data '" + input + "' has no profiles");
  const auto sp = fit_scaler(ps);
  const auto ns = NoiseSchedule::cosine(cfg.schedule_steps());
  const auto out = prepare_out(ctx);

  std::vector<double> iters, losses;
  std::string loss_csv = "iteration,loss\n";
  const auto ckpt = train(scale(ps, sp), dcfg, tcfg, ns, sp, [&](std::size_t it, double loss) {
    iters.push_back(static_cast<double>(it));
    losses.push_back(loss);
    loss_csv += std::to_string(it) + "," + format_double(loss) + "\n";
  });

  const fs::path tmp = out / "model.tsdf.tmp";
  save_checkpoint(ckpt, tmp);
  fs::rename(tmp, out / "model.tsdf");
  write_text_atomic(out / "loss.csv", loss_csv);
  if (ctx.svg) write_text_atomic(out / "loss.svg", svg_line_chart(iters, losses, "training loss"));
  write_sidecar(ctx);
  log_of(ctx) << "trained " << ckpt.iteration << " iterations on " << ps.size() << " profiles ("
              << parameter_count(dcfg) << " parameters); final loss "
              << (losses.empty() ? std::string("n/a") : format_double(losses.back())) << "\n";
}

void cmd_generate(const CommandContext& ctx) {
  const auto& cfg = ctx.config;
  const auto ckpt = load_checkpoint(require_path(cfg, "generate.checkpoint", "--model"));
  const auto m = cfg.get_u64("generate.count");
  const auto steps = cfg.get_u64("generate.steps");
  const auto total = ckpt.schedule.steps();
  if (steps > total)
    throw ConfigError("generate.steps " + std::to_string(steps) + " exceeds the trained schedule (" +
                      std::to_string(total) + ")");
  const auto opt = cfg.sample_options(ckpt.train.posterior_variance);
  const auto out = prepare_out(ctx);
  const auto scaled = steps == 0 || steps == total ? sample(ckpt, m, cfg.seed(), opt)
                                                   : sample_strided(ckpt, m, steps, cfg.seed(), opt);
  write_csv_atomic(out / "samples.csv", unscale(scaled, ckpt.scaling).data());
  write_sidecar(ctx);
  log_of(ctx) << "generated " << m << " profiles with " << (steps == 0 ? total : steps) << " reverse steps\n";
}

void cmd_calibrate(const CommandContext& ctx) {
  const auto& cfg = ctx.config;
  const auto real = load_profiles(cfg, require_path(cfg, "calibrate.real", "--real"));
  const auto synth = load_profiles(cfg, require_path(cfg, "calibrate.synthetic", "--synthetic"));
  const auto cal = build_calibrator(real, synth);
  const auto opt = cfg.calibration();
  const auto out = prepare_out(ctx);
  const RowMatrix y = calibrate(cal, synth.data(), opt);
  write_csv_atomic(out / "calibrated.csv", y);
  if (const auto& p = cfg.get("calibrate.save_calibrator"); !p.empty()) {
    const fs::path tmp = p + ".tmp";
    save_calibrator(cal, tmp);
    fs::rename(tmp, p);
  }
  write_sidecar(ctx);
  auto& log = log_of(ctx);
  log << "column,ks_before,ks_after\n";
  for (Eigen::Index t = 0; t < y.cols(); ++t) {
    const auto r = column(real.data(), t);
    log << t << "," << format_double(ks_1d(r, column(synth.data(), t))) << ","
        << format_double(ks_1d(r, column(y, t))) << "\n";
  }
}

void cmd_evaluate(const CommandContext& ctx) {
  const auto& cfg = ctx.config;
  const auto real = load_profiles(cfg, require_path(cfg, "evaluate.real", "--real"));
  const auto synth = load_profiles(cfg, require_path(cfg, "evaluate.synthetic", "--synthetic"));
  if (real.empty() || synth.empty()) throw Error("evaluate needs non-empty real and synthetic sets");
  const auto mc = cfg.metrics();
  const auto rep = bootstrap_eval(real.data(), synth.data(), mc);
  const auto out = prepare_out(ctx);
  write_text_atomic(out / "report.txt", rep.to_text());
  write_text_atomic(out / "report.csv", rep.to_csv());

  std::string hist = "column,bin,left,right,real,synthetic\n";
  for (Eigen::Index t = 0; t < real.data().cols(); ++t) {
    const auto h = shared_histogram(column(real.data(), t), column(synth.data(), t), mc.kl_bins);
    for (std::size_t b = 0; b < h.counts_a.size(); ++b)
      hist += std::to_string(t) + "," + std::to_string(b) + "," + format_double(h.edges[b]) + "," +
              format_double(h.edges[b + 1]) + "," + std::to_string(h.counts_a[b]) + "," +
              std::to_string(h.counts_b[b]) + "\n";
  }
  write_text_atomic(out / "histograms.csv", hist);

  const std::pair<const char*, const ProfileSet*> sets[] = {{"real", &real}, {"synthetic", &synth}};
  for (const auto& [name, ps] : sets) {
    if (ps->size() < 2) continue;
    const Matrix cov = gaussian_summary(*ps).covariance;
    write_text_atomic(out / ("covariance_" + std::string(name) + ".csv"), matrix_csv(cov));
    if (ctx.svg)
      write_text_atomic(out / ("covariance_" + std::string(name) + ".svg"),
                        svg_heatmap(cov, std::string(name) + " covariance"));
  }
  write_sidecar(ctx);
  log_of(ctx) << rep.to_text();
}

void cmd_baseline_gmm(const CommandContext& ctx) {
  const auto& cfg = ctx.config;
  const auto from = cfg.get("gmm.from_model");
  const auto gcfg = cfg.gmm();
  std::optional<GmmModel> model;
  if (!from.empty()) {
    if (!fs::exists(from)) throw ConfigError("model file not found: " + from);
    model = load_gmm(from);
  }
  std::optional<ProfileSet> data;
  if (!model) {
    data = load_profiles(cfg, require_path(cfg, "gmm.input", "--input"));
    if (data->size() <= gcfg.components)
      throw ConfigError("GMM needs more profiles (" + std::to_string(data->size()) + ") than components (" +
                        std::to_string(gcfg.components) + ")");
  }
  const auto out = prepare_out(ctx);
  if (!model) {
    model = gmm_fit(data->data(), gcfg);
    const fs::path tmp = out / "gmm.tsdf.tmp";
    save_gmm(*model, tmp);
    fs::rename(tmp, out / "gmm.tsdf");
  }
  const auto m = cfg.get_u64("gmm.count");
  write_csv_atomic(out / "gmm_samples.csv", gmm_sample(*model, m, cfg.seed()));
  write_sidecar(ctx);
  auto& log = log_of(ctx);
  log << "GMM with " << model->components() << " components";
  if (!model->log_likelihood.empty())
    log << ", " << model->log_likelihood.size() << " EM iterations, mean log-likelihood "
        << format_double(model->log_likelihood.back());
  log << "; sampled " << m << " profiles\n";
}

void cmd_synthesize_dataset(const CommandContext& ctx) {
  const auto& cfg = ctx.config;
  const auto n = cfg.get_u64("synth.count");
  const auto out = prepare_out(ctx);
  write_csv_atomic(out / "dataset.csv", synthesize_profiles(n, cfg.resolution(), cfg.seed()).data());
  write_sidecar(ctx);
  log_of(ctx) << "wrote " << n << " synthetic profiles (" << to_string(cfg.resolution()) << ")\n";
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Diffusion-based synthetic energy profiles: train, generate, calibrate, evaluate", "tsdiff"};
  app.require_subcommand(1, 1);

  struct Shared {
    std::string config, out = ".";
    std::optional<std::uint64_t> seed;
    bool header = false, svg = false;
    std::vector<std::string> sets;
  } shared;
  std::map<std::string, std::string> flag_values;  // config key -> value

  auto add_shared = [&](CLI::App* sub) {
    sub->add_option("--config", shared.config, "key=value config file");
    sub->add_option("--seed", shared.seed, "random seed");
    sub->add_option("--out", shared.out, "output directory");
    sub->add_flag("--header", shared.header, "input CSVs start with a header line");
    sub->add_flag("--svg", shared.svg, "also render SVG plots");
    sub->add_option("--set", shared.sets, "override a config key (key=value), repeatable");
  };
  auto add_key = [&](CLI::App* sub, const std::string& flag, const std::string& key, const std::string& help) {
    sub->add_option_function<std::string>(flag, [&flag_values, key](const std::string& v) { flag_values[key] = v; },
                                          help);
  };
  auto add_bool_key = [&](CLI::App* sub, const std::string& flag, const std::string& key, const std::string& help) {
    sub->add_flag_callback(flag, [&flag_values, key] { flag_values[key] = "true"; }, help);
  };

  std::map<std::string, std::function<void(const CommandContext&)>> verbs;

  auto* train = app.add_subcommand("train", "train a denoiser on a profile CSV");
  add_shared(train);
  add_key(train, "--input", "train.input", "training CSV (one profile per row)");
  add_key(train, "--iterations", "train.iterations", "optimizer iterations");
  add_key(train, "--resolution", "data.resolution", "1min, 15min, 30min or 1hour");
  verbs["train"] = cmd_train;

  auto* gen = app.add_subcommand("generate", "sample profiles from a checkpoint");
  add_shared(gen);
  add_key(gen, "--model", "generate.checkpoint", "checkpoint file");
  add_key(gen, "--count,-m", "generate.count", "number of profiles");
  add_key(gen, "--steps", "generate.steps", "reverse steps; fewer than S uses the strided sampler");
  add_bool_key(gen, "--final-step-noise", "generate.final_step_noise", "add noise on the last step");
  verbs["generate"] = cmd_generate;

  auto* cal = app.add_subcommand("calibrate", "map synthetic marginals onto the real ones");
  add_shared(cal);
  add_key(cal, "--real", "calibrate.real", "real CSV");
  add_key(cal, "--synthetic", "calibrate.synthetic", "synthetic CSV");
  add_key(cal, "--save-calibrator", "calibrate.save_calibrator", "write the fitted calibrator here");
  add_key(cal, "--resolution", "data.resolution", "1min, 15min, 30min or 1hour");
  add_bool_key(cal, "--interpolate", "calibrate.interpolate", "interpolate between ECDF steps");
  verbs["calibrate"] = cmd_calibrate;

  auto* eval = app.add_subcommand("evaluate", "bootstrap the metric suite");
  add_shared(eval);
  add_key(eval, "--real", "evaluate.real", "real CSV");
  add_key(eval, "--synthetic", "evaluate.synthetic", "synthetic CSV");
  add_key(eval, "--repeats", "metrics.repeats", "bootstrap repeats");
  add_key(eval, "--resolution", "data.resolution", "1min, 15min, 30min or 1hour");
  verbs["evaluate"] = cmd_evaluate;

  auto* gmm = app.add_subcommand("baseline-gmm", "fit and sample the Gaussian mixture baseline");
  add_shared(gmm);
  add_key(gmm, "--input", "gmm.input", "training CSV");
  add_key(gmm, "--components,-k", "gmm.components", "mixture components");
  add_key(gmm, "--count,-m", "gmm.count", "number of samples");
  add_key(gmm, "--from-model", "gmm.from_model", "sample from a saved model instead of fitting");
  add_key(gmm, "--resolution", "data.resolution", "1min, 15min, 30min or 1hour");
  add_bool_key(gmm, "--allow-large", "gmm.allow_large", "permit T > 96");
  verbs["baseline-gmm"] = cmd_baseline_gmm;

  auto* syn = app.add_subcommand("synthesize-dataset", "write the bundled synthetic heat-pump dataset");
  add_shared(syn);
  add_key(syn, "--count,-n", "synth.count", "number of profiles");
  add_key(syn, "--resolution", "data.resolution", "1min, 15min, 30min or 1hour");
  verbs["synthesize-dataset"] = cmd_synthesize_dataset;

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kUsageError;
  }

  const std::string verb = app.get_subcommands().front()->get_name();
  try {
    CommandContext ctx;
    if (!shared.config.empty()) ctx.config = RunConfig::load(shared.config);
    for (const auto& s : shared.sets) ctx.config.set_assignment(s);
    for (const auto& [k, v] : flag_values) ctx.config.set(k, v);
    if (shared.seed) ctx.config.set("seed", std::to_string(*shared.seed));
    if (shared.header) ctx.config.set("data.header", "true");
    ctx.out_dir = shared.out;
    ctx.svg = shared.svg;
    ctx.log = &out;
    verbs.at(verb)(ctx);
    return kOk;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
}

}  // namespace tsdiff::cli
