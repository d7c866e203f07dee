#include "tsdiff/calibration.hpp"

#include "tsdiff/rng.hpp"
#include "support/temp_dir.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

using namespace tsdiff;

namespace {

// Brute-force two-sample KS over every pooled point.
double ks_brute(const std::vector<double>& a, const std::vector<double>& b) {
  auto cdf = [](const std::vector<double>& s, double v) {
    return static_cast<double>(std::count_if(s.begin(), s.end(), [&](double x) { return x <= v; })) /
           static_cast<double>(s.size());
  };
  double best = 0;
  for (const auto* src : {&a, &b})
    for (double v : *src) best = std::max(best, std::abs(cdf(a, v) - cdf(b, v)));
  return best;
}

RowMatrix gaussian(std::size_t n, std::size_t t, double mu, double sd, std::uint64_t seed) {
  Rng rng(seed);
  RowMatrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(t));
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = mu + sd * rng.normal();
  return x;
}

std::vector<double> col(const RowMatrix& m, Eigen::Index t) {
  std::vector<double> c(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) c[static_cast<std::size_t>(i)] = m(i, t);
  return c;
}

}  // namespace

TEST_CASE("ECDF evaluation") {
  const auto e = fit_ecdf(std::vector<double>{3, 1, 2});
  CHECK(e(2) == doctest::Approx(2.0 / 3.0));
  CHECK(e(0.5) == 0.0);
  CHECK(e(3) == 1.0);
  CHECK(e(-std::numeric_limits<double>::infinity()) == 0.0);
  CHECK(e(1e300) == 1.0);
  CHECK(e.sorted_values() == std::vector<double>{1, 2, 3});
  CHECK_THROWS(fit_ecdf(std::vector<double>{}));
  CHECK_THROWS(fit_ecdf(std::vector<double>{1.0, std::nan("")}));

  // right-continuous, nondecreasing on a dense grid
  const auto f = fit_ecdf(std::vector<double>{0, 0, 1, 4, 4, 4});
  double prev = 0;
  for (double v = -1; v <= 5; v += 0.01) {
    CHECK(f(v) >= prev);
    prev = f(v);
  }
  CHECK(f(0) == doctest::Approx(2.0 / 6.0));
  CHECK(f(4) == 1.0);
}

TEST_CASE("ECDF converges uniformly (DKW at 99.9%)") {
  Rng rng(17);
  std::vector<double> u(10000);
  for (auto& v : u) v = rng.uniform();
  const auto e = fit_ecdf(u);
  double sup = 0;
  const auto& s = e.sorted_values();
  const auto n = static_cast<double>(s.size());
  for (std::size_t i = 0; i < s.size(); ++i)
    sup = std::max({sup, std::abs(static_cast<double>(i + 1) / n - s[i]), std::abs(static_cast<double>(i) / n - s[i])});
  // DKW: P(sup > eps) <= 2 exp(-2 n eps^2); eps for alpha = 1e-3
  const double eps = std::sqrt(std::log(2.0 / 1e-3) / (2.0 * n));
  CHECK(sup <= eps);
  CHECK(eps <= 0.03);
}

TEST_CASE("generalised inverse") {
  const auto e = fit_ecdf(std::vector<double>{1, 2, 3});
  CHECK(e.inverse(2.0 / 3.0) == 2);
  CHECK(e.inverse(0.5) == 2);
  CHECK(e.inverse(0.0) == 1);
  CHECK(e.inverse(1.0) == 3);
  CHECK(e.inverse(1.0 / 3.0) == 1);
  CHECK_THROWS(e.inverse(-0.1));
  CHECK_THROWS(e.inverse(1.5));

  // F^{-1}(F(x_i)) = x_i at every sample point
  Rng rng(3);
  for (std::size_t n : {1u, 2u, 7u, 100u, 999u}) {
    std::vector<double> xs(n);
    for (auto& v : xs) v = rng.normal();
    const auto g = fit_ecdf(xs);
    for (double x : xs) CHECK(g.inverse(g(x)) == x);
  }

  // ties: the step height covers every duplicate
  const auto t = fit_ecdf(std::vector<double>{5, 5, 5, 9});
  CHECK(t.inverse(0.1) == 5);
  CHECK(t.inverse(0.75) == 5);
  CHECK(t.inverse(0.76) == 9);
}

TEST_CASE("interpolated inverse") {
  const auto e = fit_ecdf(std::vector<double>{0, 10});
  CHECK(e.inverse_interpolated(0.5) == 0.0);
  CHECK(e.inverse_interpolated(0.75) == 5.0);
  CHECK(e.inverse_interpolated(1.0) == 10.0);
}

TEST_CASE("calibrator construction") {
  RowMatrix real(2, 2);
  real << 0, 10, 2, 12;
  const auto cal = build_calibrator(real, real);
  CHECK(cal.columns() == 2);
  CHECK(cal.real(0).sorted_values() == std::vector<double>{0, 2});
  CHECK(cal.real(1).sorted_values() == std::vector<double>{10, 12});
  CHECK_THROWS_AS(build_calibrator(real, RowMatrix::Zero(3, 3)), ShapeError);

  // small real sets are accepted
  CHECK_NOTHROW(build_calibrator(gaussian(408, 24, 0, 1, 1), gaussian(1000, 24, 0, 1, 2)));
}

TEST_CASE("calibration maps") {
  SUBCASE("two-point map") {
    RowMatrix real(2, 1), model(2, 1), x(1, 1);
    real << 0, 10;
    model << 0, 1;
    x << 1;
    CHECK(calibrate(build_calibrator(real, model), x)(0, 0) == 10);
  }
  SUBCASE("identity when the model equals the real data") {
    const auto real = gaussian(200, 4, 1, 2, 5);
    CHECK(calibrate(build_calibrator(real, real), real) == real);
  }
  SUBCASE("values outside the model support clamp") {
    RowMatrix real(3, 1), model(3, 1), x(2, 1);
    real << 1, 2, 3;
    model << 10, 20, 30;
    x << -100, 100;
    const auto y = calibrate(build_calibrator(real, model), x);
    CHECK(y(0, 0) == 1);
    CHECK(y(1, 0) == 3);
  }
  SUBCASE("equal sizes: calibrated fitting samples are a permutation of the real column") {
    const auto real = gaussian(300, 3, 0, 1, 6);
    const auto model = gaussian(300, 3, 0.7, 1.8, 7);
    const auto y = calibrate(build_calibrator(real, model), model);
    for (Eigen::Index t = 0; t < 3; ++t) {
      auto a = col(real, t), b = col(y, t);
      std::sort(a.begin(), a.end());
      std::sort(b.begin(), b.end());
      CHECK(a == b);
    }
  }
}

TEST_CASE("post-calibration KS bound and monotone maps") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto real = gaussian(500, 5, 0, 1, seed);
    const auto synth = gaussian(500, 5, 0.8, 1.5, seed + 100);
    const auto cal = build_calibrator(real, synth);
    const auto y = calibrate(cal, synth);
    for (Eigen::Index t = 0; t < 5; ++t) {
      const double ks = ks_brute(col(real, t), col(y, t));
      CHECK(ks <= 1.0 / 500 + 1.0 / 500);
      CHECK(ks < ks_brute(col(real, t), col(synth, t)));
      // every output is an observed real value
      const auto& support = cal.real(static_cast<std::size_t>(t)).sorted_values();
      for (Eigen::Index i = 0; i < y.rows(); ++i)
        CHECK(std::binary_search(support.begin(), support.end(), y(i, t)));
    }
    // monotone on a dense grid
    for (std::size_t t = 0; t < 5; ++t) {
      double prev = -std::numeric_limits<double>::infinity();
      for (double v = -6; v <= 6; v += 0.005) {
        const double m = cal.map(t, v);
        CHECK(m >= prev);
        prev = m;
      }
    }
  }
}

TEST_CASE("columns are calibrated independently") {
  const auto real = gaussian(100, 4, 0, 1, 8);
  const auto synth = gaussian(100, 4, 1, 1, 9);
  const auto base = calibrate(build_calibrator(real, synth), synth);

  // poison every column but t in the inputs and check column t is unchanged
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (Eigen::Index t = 0; t < 4; ++t) {
    RowMatrix x = synth;
    for (Eigen::Index c = 0; c < 4; ++c)
      if (c != t) x.col(c).setConstant(nan);
    const auto y = calibrate(build_calibrator(real, synth), x);
    CHECK(y.col(t) == base.col(t));
  }
}

TEST_CASE("calibrator persistence") {
  TempDir dir;
  const auto cal = build_calibrator(gaussian(50, 3, 0, 1, 1), gaussian(70, 3, 2, 1, 2));
  save_calibrator(cal, dir / "cal.tsdf");
  const auto back = load_calibrator(dir / "cal.tsdf");
  const auto x = gaussian(20, 3, 1, 2, 3);
  CHECK(calibrate(back, x) == calibrate(cal, x));
  for (std::size_t t = 0; t < 3; ++t) {
    CHECK(back.real(t) == cal.real(t));
    CHECK(back.model(t) == cal.model(t));
  }
  CHECK_THROWS_AS(load_calibrator(dir / "none.tsdf"), ConfigError);
}
