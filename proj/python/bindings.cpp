#include "cli/commands.hpp"
#include "tsdiff/calibration.hpp"
#include "tsdiff/diffusion.hpp"
#include "tsdiff/gmm.hpp"
#include "tsdiff/metrics.hpp"
#include "tsdiff/synthetic.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

namespace py = pybind11;
using namespace tsdiff;

namespace {

cli::RunConfig make_config(const std::map<std::string, py::object>& options) {
  cli::RunConfig cfg;
  for (const auto& [k, v] : options) {
    std::string text = py::str(v);
    if (py::isinstance<py::bool_>(v)) text = v.cast<bool>() ? "true" : "false";
    cfg.set(k, text);
  }
  return cfg;
}

py::dict metric_dict(const MetricValues& v) {
  py::dict d;
  d["mmd"] = v.mmd;
  d["gfd"] = v.gfd;
  d["kl"] = v.kl;
  d["wd"] = v.wd;
  d["ks"] = v.ks;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Diffusion-based synthetic energy profiles";

  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_IOError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);

  m.def("steps_per_day", [](const std::string& res) { return steps_per_day(parse_resolution(res)); });
  m.def(
      "synthesize_profiles",
      [](std::size_t n, const std::string& res, std::uint64_t seed) {
        return synthesize_profiles(n, parse_resolution(res), seed).data();
      },
      py::arg("n"), py::arg("resolution") = "1hour", py::arg("seed") = 0);
  m.def(
      "load_csv",
      [](const std::filesystem::path& p, const std::string& res, bool header) {
        return load_csv(p, parse_resolution(res), header).data();
      },
      py::arg("path"), py::arg("resolution") = "1hour", py::arg("header") = false);
  m.def("write_csv", py::overload_cast<const std::filesystem::path&, const RowMatrix&>(&write_csv), py::arg("path"),
        py::arg("data"));

  m.def("cosine_alpha_bar", [](std::size_t steps) {
    const auto ns = NoiseSchedule::cosine(steps);
    Vector a(static_cast<Eigen::Index>(steps + 1));
    for (std::size_t s = 0; s <= steps; ++s) a[static_cast<Eigen::Index>(s)] = ns.alpha_bar(s);
    return a;
  });
  m.def("default_config", [] { return cli::RunConfig::defaults(); },
        "All run-config keys with their default values.");

  py::class_<Checkpoint>(m, "Checkpoint")
      .def_readonly("iteration", &Checkpoint::iteration)
      .def_property_readonly("diffusion_steps", [](const Checkpoint& c) { return c.schedule.steps(); })
      .def_property_readonly("seq_len", [](const Checkpoint& c) { return c.denoiser.seq_len; })
      .def_property_readonly("parameter_count", [](const Checkpoint& c) { return parameter_count(c.denoiser); })
      .def_property_readonly("scaling",
                             [](const Checkpoint& c) { return std::pair{c.scaling.min_val, c.scaling.max_val}; })
      .def("save", [](const Checkpoint& c, const std::filesystem::path& p) { save_checkpoint(c, p); })
      .def_static("load", &load_checkpoint);

  m.def(
      "train",
      [](const RowMatrix& profiles, const std::map<std::string, py::object>& options) {
        const auto cfg = make_config(options);
        const ProfileSet ps(profiles, cfg.resolution());
        const auto sp = fit_scaler(ps);
        std::vector<double> losses;
        Checkpoint ckpt = [&] {
          py::gil_scoped_release release;
          return train(scale(ps, sp), cfg.denoiser(), cfg.train(), NoiseSchedule::cosine(cfg.schedule_steps()), sp,
                       [&](std::size_t, double l) { losses.push_back(l); });
        }();
        return std::pair{std::move(ckpt), losses};
      },
      py::arg("profiles"), py::arg("options") = std::map<std::string, py::object>{},
      "Trains on profiles in physical units. `options` takes run-config keys; returns (checkpoint, losses).");

  m.def(
      "generate",
      [](const Checkpoint& ckpt, std::size_t count, std::uint64_t seed, std::size_t steps,
         const std::map<std::string, py::object>& options) {
        const auto opt = make_config(options).sample_options(ckpt.train.posterior_variance);
        py::gil_scoped_release release;
        const auto total = ckpt.schedule.steps();
        const auto x = steps == 0 || steps == total ? sample(ckpt, count, seed, opt)
                                                    : sample_strided(ckpt, count, steps, seed, opt);
        return RowMatrix(unscale(x, ckpt.scaling).data());
      },
      py::arg("checkpoint"), py::arg("count"), py::arg("seed") = 0, py::arg("steps") = 0,
      py::arg("options") = std::map<std::string, py::object>{},
      "Samples profiles in physical units; steps below S use the strided sampler.");

  m.def(
      "calibrate",
      [](const RowMatrix& real, const RowMatrix& synthetic, std::optional<RowMatrix> x, bool interpolate) {
        const auto cal = build_calibrator(real, synthetic);
        return calibrate(cal, x ? *x : synthetic, CalibrationOptions{interpolate});
      },
      py::arg("real"), py::arg("synthetic"), py::arg("x") = py::none(), py::arg("interpolate") = false,
      "Per-column ECDF quantile mapping of `x` (default: `synthetic`) onto the real marginals.");

  m.def(
      "evaluate",
      [](const RowMatrix& real, const RowMatrix& synthetic, std::size_t repeats, std::uint64_t seed,
         std::optional<std::size_t> subset_size) {
        MetricConfig mc;
        mc.repeats = repeats;
        mc.seed = seed;
        mc.subset_size = subset_size;
        const auto rep = bootstrap_eval(real, synthetic, mc);
        py::dict d;
        d["mean"] = metric_dict(rep.mean);
        d["std"] = metric_dict(rep.std);
        d["subset_size"] = rep.subset_size;
        d["repeats"] = rep.repeats;
        return d;
      },
      py::arg("real"), py::arg("synthetic"), py::arg("repeats") = 10, py::arg("seed") = 0,
      py::arg("subset_size") = py::none());

  m.def("mmd", &mmd, py::arg("a"), py::arg("b"), py::arg("bandwidth") = py::none());
  m.def("gfd", [](const RowMatrix& a, const RowMatrix& b) { return gfd(gaussian_summary(a), gaussian_summary(b)); });
  m.def("ks_marginal", &ks_marginal);
  m.def("wd_marginal", &wd_marginal);
  m.def("kl_marginal", &kl_marginal, py::arg("a"), py::arg("b"), py::arg("bins") = 64, py::arg("eps") = 1e-10);

  py::class_<GmmModel>(m, "GmmModel")
      .def_readonly("weights", &GmmModel::weights)
      .def_readonly("means", &GmmModel::means)
      .def_readonly("covariances", &GmmModel::covariances)
      .def_readonly("log_likelihood", &GmmModel::log_likelihood)
      .def_readonly("ridge_events", &GmmModel::ridge_events)
      .def("save", [](const GmmModel& g, const std::filesystem::path& p) { save_gmm(g, p); })
      .def_static("load", &load_gmm);
  m.def(
      "gmm_fit",
      [](const RowMatrix& data, std::size_t components, std::uint64_t seed, std::size_t max_iters, double tol,
         bool allow_large) {
        py::gil_scoped_release release;
        return gmm_fit(data, GmmConfig{components, max_iters, tol, seed, allow_large});
      },
      py::arg("data"), py::arg("components") = 10, py::arg("seed") = 0, py::arg("max_iters") = 500,
      py::arg("tol") = 1e-6, py::arg("allow_large") = false);
  m.def("gmm_sample", &gmm_sample, py::arg("model"), py::arg("count"), py::arg("seed") = 0);

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        const int code = cli::run(args, out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs a command-line verb in-process; returns (exit_code, stdout, stderr).");
}
