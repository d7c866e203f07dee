#include "cli/commands.hpp"

#include "tsdiff/synthetic.hpp"
#include "support/temp_dir.hpp"

#include <doctest.h>

#include <fstream>
#include <sstream>

using namespace tsdiff;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result invoke(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_config(const fs::path& p) {
  std::ofstream(p) << "# tiny run\n"
                      "denoiser.d_model=8\n"
                      "denoiser.layers=1\n"
                      "denoiser.heads=2\n"
                      "denoiser.fold=2\n"
                      "denoiser.kernel_half_width=1\n"
                      "schedule.steps=20\n"
                      "train.iterations=30\n"
                      "train.batch_size=16\n";
}

RowMatrix gaussian(std::size_t n, double mu, double sd, std::uint64_t seed) {
  Rng rng(seed);
  RowMatrix x(static_cast<Eigen::Index>(n), 24);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = mu + sd * rng.normal();
  return x;
}

// Shared fixture: dataset + trained tiny model.
struct Trained {
  TempDir dir;
  fs::path cfg = dir / "tiny.cfg";
  fs::path data = dir / "data.csv";
  fs::path run = dir / "run";
  Trained() {
    write_config(cfg);
    write_csv(data, synthesize_profiles(120, Resolution::Hour1, 4));
    const auto r = invoke({"train", "--config", cfg.string(), "--input", data.string(), "--out", run.string(),
                        "--seed", "7"});
    REQUIRE(r.code == 0);
  }
};

}  // namespace

TEST_CASE("run config") {
  using cli::RunConfig;
  const RunConfig def;
  CHECK(RunConfig::from_text(def.to_text()) == def);
  CHECK(def.get("gmm.components") == "10");
  CHECK(def.get("metrics.repeats") == "10");
  CHECK(def.train() == TrainConfig{});

  const auto c = RunConfig::from_text("# comment\n\n seed = 5 \ndenoiser.block_variant=pre_ln\n");
  CHECK(c.seed() == 5);
  CHECK(c.denoiser().block_variant == BlockVariant::PreLn);

  CHECK_THROWS_AS(RunConfig::from_text("nonsense.key=1\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_text("seed=-3\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_text("data.header=yes\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_text("data.resolution=5min\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_text("no equals sign\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_text("denoiser.heads=5\n").denoiser(), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_text("train.batch_size=0\n").train(), ConfigError);
}

TEST_CASE("synthetic dataset") {
  const auto a = synthesize_profiles(200, Resolution::Min15, 1);
  CHECK(a.size() == 200);
  CHECK(a.steps() == 96);
  CHECK(a.data().minCoeff() >= 0.0);
  CHECK(a.data() == synthesize_profiles(200, Resolution::Min15, 1).data());
  CHECK(a.data().topRows(50) == synthesize_profiles(50, Resolution::Min15, 1).data());
  CHECK(a.data() != synthesize_profiles(200, Resolution::Min15, 2).data());
  // both regimes present: days with a compressor (peaks above 1 kW) and without
  std::size_t cold = 0;
  for (Eigen::Index i = 0; i < 200; ++i) cold += a.data().row(i).maxCoeff() > 1000.0 ? 1 : 0;
  CHECK(cold > 50);
  CHECK(cold < 150);
}

TEST_CASE("usage errors and help") {
  CHECK(invoke({}).code == 2);
  CHECK(invoke({"bogus"}).code == 2);
  CHECK(invoke({"train", "--no-such-flag"}).code == 2);
  const auto h = invoke({"generate", "--help"});
  CHECK(h.code == 0);
  CHECK(h.out.find("--steps") != std::string::npos);
}

TEST_CASE("train") {
  Trained t;
  CHECK(fs::exists(t.run / "model.tsdf"));
  CHECK(!fs::exists(t.run / "model.tsdf.tmp"));
  const auto loss = slurp(t.run / "loss.csv");
  CHECK(loss.rfind("iteration,loss\n1,", 0) == 0);
  CHECK(std::count(loss.begin(), loss.end(), '\n') == 31);
  const auto ckpt = load_checkpoint(t.run / "model.tsdf");
  CHECK(ckpt.iteration == 30);
  CHECK(ckpt.denoiser.d_model == 8);
  CHECK(ckpt.schedule.steps() == 20);

  SUBCASE("rerun is byte-identical") {
    const auto again = t.dir / "again";
    REQUIRE(invoke({"train", "--config", t.cfg.string(), "--input", t.data.string(), "--out", again.string(),
                 "--seed", "7"})
                .code == 0);
    CHECK(slurp(again / "model.tsdf") == slurp(t.run / "model.tsdf"));
    CHECK(slurp(again / "loss.csv") == loss);
  }
  SUBCASE("the sidecar reproduces the run") {
    const auto side = t.dir / "side";
    REQUIRE(invoke({"train", "--config", (t.run / "resolved_config.txt").string(), "--out", side.string()}).code == 0);
    CHECK(slurp(side / "model.tsdf") == slurp(t.run / "model.tsdf"));
    CHECK(slurp(side / "resolved_config.txt") == slurp(t.run / "resolved_config.txt"));
  }
  SUBCASE("missing input exits 2 without a checkpoint") {
    const auto bad = t.dir / "bad";
    const auto r = invoke({"train", "--config", t.cfg.string(), "--input", (t.dir / "nope.csv").string(), "--out",
                        bad.string()});
    CHECK(r.code == 2);
    CHECK(r.err.find("nope.csv") != std::string::npos);
    CHECK(!fs::exists(bad / "model.tsdf"));
    CHECK(invoke({"train", "--out", bad.string()}).code == 2);
  }
  SUBCASE("malformed input is a runtime error") {
    std::ofstream(t.dir / "short.csv") << "1,2,3\n";
    CHECK(invoke({"train", "--input", (t.dir / "short.csv").string(), "--out", (t.dir / "x").string()}).code == 1);
  }
}

TEST_CASE("generate") {
  Trained t;
  const auto model = (t.run / "model.tsdf").string();
  auto gen = [&](const std::string& out, std::vector<std::string> extra) {
    std::vector<std::string> a{"generate", "--model", model, "--count", "100", "--seed", "2", "--out",
                               (t.dir / out).string()};
    a.insert(a.end(), extra.begin(), extra.end());
    return invoke(a);
  };
  REQUIRE(gen("g", {}).code == 0);
  const auto samples = load_csv(t.dir / "g" / "samples.csv", Resolution::Hour1);
  CHECK(samples.size() == 100);
  CHECK(samples.steps() == 24);

  // physical units: equals the library sample passed through unscale
  const auto ckpt = load_checkpoint(model);
  const auto expect = unscale(sample(ckpt, 100, 2), ckpt.scaling);
  CHECK((samples.data() - expect.data()).cwiseAbs().maxCoeff() <= 1e-9 * expect.data().cwiseAbs().maxCoeff());

  REQUIRE(gen("g_full", {"--steps", "20"}).code == 0);
  CHECK(slurp(t.dir / "g_full" / "samples.csv") == slurp(t.dir / "g" / "samples.csv"));
  REQUIRE(gen("g_again", {}).code == 0);
  CHECK(slurp(t.dir / "g_again" / "samples.csv") == slurp(t.dir / "g" / "samples.csv"));

  REQUIRE(gen("g_strided", {"--steps", "5"}).code == 0);
  const auto strided = load_csv(t.dir / "g_strided" / "samples.csv", Resolution::Hour1);
  CHECK(strided.data() == unscale(sample_strided(ckpt, 100, 5, 2), ckpt.scaling).data());

  CHECK(gen("g_bad", {"--steps", "21"}).code == 2);

  auto bytes = slurp(model);
  bytes[bytes.size() / 2] ^= 0x20;
  std::ofstream(t.dir / "corrupt.tsdf", std::ios::binary) << bytes;
  const auto r = invoke({"generate", "--model", (t.dir / "corrupt.tsdf").string(), "--out", (t.dir / "gc").string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("checksum") != std::string::npos);
}

TEST_CASE("calibrate") {
  TempDir dir;
  const auto real = dir / "real.csv", synth = dir / "synth.csv";
  write_csv(real, gaussian(300, 5, 1, 1));
  write_csv(synth, gaussian(200, 6, 2, 2));

  SUBCASE("identity when synthetic equals real") {
    REQUIRE(invoke({"calibrate", "--real", real.string(), "--synthetic", real.string(), "--out",
                 (dir / "id").string()})
                .code == 0);
    CHECK(slurp(dir / "id" / "calibrated.csv") == slurp(real));
  }
  SUBCASE("per-column KS improves and the calibrator reloads") {
    const auto r = invoke({"calibrate", "--real", real.string(), "--synthetic", synth.string(), "--out",
                        (dir / "c").string(), "--save-calibrator", (dir / "cal.tsdf").string()});
    REQUIRE(r.code == 0);
    std::istringstream lines(r.out);
    std::string line;
    std::getline(lines, line);
    CHECK(line == "column,ks_before,ks_after");
    std::size_t rows = 0;
    while (std::getline(lines, line)) {
      const auto a = line.find(','), b = line.rfind(',');
      CHECK(std::stod(line.substr(b + 1)) <= std::stod(line.substr(a + 1, b - a - 1)));
      ++rows;
    }
    CHECK(rows == 24);
    const auto cal = load_calibrator(dir / "cal.tsdf");
    const auto y = load_csv(dir / "c" / "calibrated.csv", Resolution::Hour1);
    CHECK(calibrate(cal, load_csv(synth, Resolution::Hour1)).data() == y.data());
  }
  SUBCASE("width mismatch names both counts") {
    RowMatrix wide = RowMatrix::Zero(3, 48);
    write_csv(dir / "wide.csv", wide);
    const auto r = invoke({"calibrate", "--real", real.string(), "--synthetic", (dir / "wide.csv").string(), "--out",
                        (dir / "m").string()});
    CHECK(r.code == 1);
    CHECK(r.err.find("24") != std::string::npos);
    CHECK(r.err.find("48") != std::string::npos);
  }
}

TEST_CASE("evaluate") {
  TempDir dir;
  const auto a = dir / "a.csv", b = dir / "b.csv";
  write_csv(a, gaussian(150, 0, 1, 3));
  write_csv(b, gaussian(120, 0.5, 1, 4));

  SUBCASE("self-comparison") {
    REQUIRE(invoke({"evaluate", "--real", a.string(), "--synthetic", a.string(), "--out", (dir / "s").string()}).code ==
            0);
    std::istringstream rep(slurp(dir / "s" / "report.txt"));
    std::string line;
    std::size_t seen = 0;
    while (std::getline(rep, line)) {
      const auto eq = line.find('=');
      const auto key = line.substr(0, eq);
      if (key.size() < 5 || key.substr(key.size() - 5) != ".mean") continue;
      const double v = std::stod(line.substr(eq + 1));
      CHECK(v <= (key == "kl.mean" ? 1e-6 : 1e-8));
      ++seen;
    }
    CHECK(seen == 5);
  }
  SUBCASE("report and plot exports") {
    REQUIRE(invoke({"evaluate", "--real", a.string(), "--synthetic", b.string(), "--out", (dir / "e").string(), "--svg"})
                .code == 0);
    const auto csv = slurp(dir / "e" / "report.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 11);
    const auto hist = slurp(dir / "e" / "histograms.csv");
    CHECK(hist.rfind("column,bin,left,right,real,synthetic\n", 0) == 0);
    CHECK(std::count(hist.begin(), hist.end(), '\n') == 1 + 24 * 64);
    const auto cov = load_csv(dir / "e" / "covariance_real.csv", Resolution::Hour1);
    CHECK(cov.size() == 24);
    CHECK(fs::exists(dir / "e" / "covariance_synthetic.svg"));
    // rerun: byte-identical report
    REQUIRE(invoke({"evaluate", "--real", a.string(), "--synthetic", b.string(), "--out", (dir / "e2").string()}).code ==
            0);
    CHECK(slurp(dir / "e2" / "report.csv") == csv);
  }
  SUBCASE("empty input") {
    std::ofstream(dir / "empty.csv") << "";
    CHECK(invoke({"evaluate", "--real", a.string(), "--synthetic", (dir / "empty.csv").string(), "--out",
               (dir / "x").string()})
              .code == 1);
  }
}

TEST_CASE("baseline-gmm") {
  TempDir dir;
  const auto data = dir / "d.csv";
  write_csv(data, synthesize_profiles(150, Resolution::Hour1, 9));
  REQUIRE(invoke({"baseline-gmm", "--input", data.string(), "--out", (dir / "g").string(), "-m", "50"}).code == 0);
  const auto model = load_gmm(dir / "g" / "gmm.tsdf");
  CHECK(model.components() == 10);
  CHECK(load_csv(dir / "g" / "gmm_samples.csv", Resolution::Hour1).size() == 50);

  REQUIRE(invoke({"baseline-gmm", "--input", data.string(), "--out", (dir / "g2").string(), "-m", "50"}).code == 0);
  CHECK(slurp(dir / "g2" / "gmm_samples.csv") == slurp(dir / "g" / "gmm_samples.csv"));

  REQUIRE(invoke({"baseline-gmm", "--from-model", (dir / "g" / "gmm.tsdf").string(), "--out", (dir / "g3").string(),
               "-m", "50"})
              .code == 0);
  CHECK(slurp(dir / "g3" / "gmm_samples.csv") == slurp(dir / "g" / "gmm_samples.csv"));

  const auto r = invoke({"baseline-gmm", "--from-model", (dir / "none.tsdf").string(), "--out", (dir / "g4").string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("model file not found") != std::string::npos);

  CHECK(invoke({"baseline-gmm", "--input", data.string(), "-k", "200", "--out", (dir / "g5").string()}).code == 2);
}

TEST_CASE("synthesize-dataset") {
  TempDir dir;
  REQUIRE(invoke({"synthesize-dataset", "-n", "40", "--resolution", "30min", "--seed", "3", "--out",
               (dir / "s").string()})
              .code == 0);
  const auto ps = load_csv(dir / "s" / "dataset.csv", Resolution::Min30);
  CHECK(ps.data() == synthesize_profiles(40, Resolution::Min30, 3).data());
  const auto side = slurp(dir / "s" / "resolved_config.txt");
  CHECK(side.find("synth.count=40\n") != std::string::npos);
  CHECK(side.find("data.resolution=30min\n") != std::string::npos);
}
