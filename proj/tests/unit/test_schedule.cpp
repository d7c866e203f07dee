#include "tsdiff/rng.hpp"
#include "tsdiff/schedule.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace tsdiff;

namespace {

/// The cosine formula evaluated directly, no clipping.
double raw_cosine_alpha_bar(double s, double total) {
  auto f = [&](double x) {
    const double c = std::cos((x / total + 0.008) / 1.008 * std::numbers::pi / 2);
    return c * c;
  };
  return f(s) / f(0);
}

}  // namespace

TEST_CASE("cosine schedule basic shape") {
  for (std::size_t steps : {10u, 100u, 4000u}) {
    const auto ns = NoiseSchedule::cosine(steps);
    CHECK(ns.steps() == steps);
    CHECK(ns.alpha_bar(0) == 1.0);
    for (std::size_t s = 1; s <= steps; ++s) {
      CHECK(ns.beta(s) > 0.0);
      CHECK(ns.beta(s) < 1.0);
      CHECK(ns.alpha_bar(s) < ns.alpha_bar(s - 1));
    }
  }
  CHECK_THROWS_AS(NoiseSchedule::cosine(1), std::invalid_argument);
}

TEST_CASE("cosine schedule reaches noise at S=4000") {
  CHECK(raw_cosine_alpha_bar(4000, 4000) < 1e-3);
  const auto ns = NoiseSchedule::cosine(4000);
  CHECK(ns.alpha_bar(4000) < 1e-3);
  // unclipped steps follow the formula itself
  CHECK(ns.alpha_bar(1000) == doctest::Approx(raw_cosine_alpha_bar(1000, 4000)).epsilon(1e-12));
  CHECK(ns.beta(4000) == 0.999);
}

TEST_CASE("alpha_bar is the running product of alpha") {
  const auto ns = NoiseSchedule::cosine(10000);
  long double prod = 1.0L;
  double worst = 0.0;
  for (std::size_t s = 1; s <= ns.steps(); ++s) {
    prod *= 1.0L - static_cast<long double>(ns.beta(s));
    worst = std::max(worst, static_cast<double>(std::fabs((ns.alpha_bar(s) - prod) / prod)));
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("posterior variance bounds") {
  const auto ns = NoiseSchedule::cosine(500);
  CHECK(ns.posterior_var(1) == ns.beta(1));
  for (std::size_t s = 2; s <= ns.steps(); ++s) CHECK(ns.posterior_var(s) <= ns.beta(s));
  CHECK(ns.variance(7, PosteriorVariance::Beta) == ns.beta(7));
  CHECK(ns.variance(7, PosteriorVariance::BetaTilde) == ns.posterior_var(7));
}

TEST_CASE("from_betas rebuilds the same schedule") {
  const auto ns = NoiseSchedule::cosine(64);
  const auto back = NoiseSchedule::from_betas(ns.betas());
  for (std::size_t s = 1; s <= 64; ++s) {
    CHECK(back.alpha_bar(s) == ns.alpha_bar(s));
    CHECK(back.coef_x0(s) == ns.coef_x0(s));
  }
  CHECK_THROWS_AS(NoiseSchedule::from_betas({0.1, 1.0}), std::invalid_argument);
}

TEST_CASE("forward_sample closed form") {
  const auto ns = NoiseSchedule::cosine(100);
  Vector x0(3);
  x0 << 0.5, -1.0, 0.25;
  Vector eps(3);
  eps << 0.3, 0.1, -2.0;

  SUBCASE("s = 1 stays close to x0") {
    const Vector x1 = forward_sample(x0, 1, eps, ns);
    const double a = ns.alpha_bar(1);
    CHECK((x1 - x0).norm() <= (1 - std::sqrt(a)) * x0.norm() + std::sqrt(1 - a) * eps.norm() + 1e-15);
    CHECK(std::sqrt(1 - a) < 0.05);
  }
  SUBCASE("zero signal") {
    const Vector xs = forward_sample(Vector::Zero(3), 40, eps, ns);
    CHECK((xs - std::sqrt(1 - ns.alpha_bar(40)) * eps).norm() == 0.0);
  }
  SUBCASE("range") {
    CHECK_THROWS_AS(forward_sample(x0, 0, eps, ns), std::out_of_range);
    CHECK_THROWS_AS(forward_sample(x0, 101, eps, ns), std::out_of_range);
  }
  SUBCASE("Monte-Carlo moments") {
    const std::size_t s = 37;
    const int n = 100000;
    Rng rng(5);
    Vector sum = Vector::Zero(3), sq = Vector::Zero(3);
    for (int i = 0; i < n; ++i) {
      Vector e(3);
      for (auto& v : e) v = rng.normal();
      const Vector xs = forward_sample(x0, s, e, ns);
      sum += xs;
      sq += xs.cwiseProduct(xs);
    }
    const double ab = ns.alpha_bar(s);
    const double var_true = 1 - ab;
    for (int j = 0; j < 3; ++j) {
      const double mean = sum[j] / n;
      const double var = sq[j] / n - mean * mean;
      CHECK(std::abs(mean - std::sqrt(ab) * x0[j]) <= 3 * std::sqrt(var_true / n));
      CHECK(std::abs(var - var_true) <= 3 * var_true * std::sqrt(2.0 / (n - 1)));
    }
  }
}

TEST_CASE("two forward steps compose into the closed form at s=2") {
  const auto ns = NoiseSchedule::cosine(50);
  const int n = 100000;
  const double x0 = 0.7;
  Rng rng(9);
  double sum = 0, sq = 0;
  for (int i = 0; i < n; ++i) {
    const double x1 = std::sqrt(1 - ns.beta(1)) * x0 + std::sqrt(ns.beta(1)) * rng.normal();
    const double x2 = std::sqrt(1 - ns.beta(2)) * x1 + std::sqrt(ns.beta(2)) * rng.normal();
    sum += x2;
    sq += x2 * x2;
  }
  const double mean = sum / n, var = sq / n - mean * mean;
  const double var_true = 1 - ns.alpha_bar(2);
  CHECK(std::abs(mean - std::sqrt(ns.alpha_bar(2)) * x0) <= 4 * std::sqrt(var_true / n));
  CHECK(std::abs(var - var_true) <= 4 * var_true * std::sqrt(2.0 / (n - 1)));
}

TEST_CASE("posterior_mean coefficients") {
  const auto ns = NoiseSchedule::cosine(30);
  CHECK(posterior_mean(Vector::Zero(4), Vector::Zero(4), 12, ns).norm() == 0.0);

  // s = 1: x_s coefficient vanishes since alpha_bar_0 = 1
  CHECK(ns.coef_xs(1) == 0.0);
  Vector x0 = Vector::Constant(2, 0.4), xs = Vector::Constant(2, -3.0);
  const Vector mu1 = posterior_mean(xs, x0, 1, ns);
  CHECK(mu1[0] == doctest::Approx(ns.beta(1) / (1 - ns.alpha_bar(1)) * 0.4).epsilon(1e-14));

  // independent recomputation from the raw beta array
  std::vector<double> ab(31, 1.0);
  for (std::size_t s = 1; s <= 30; ++s) ab[s] = ab[s - 1] * (1 - ns.betas()[s - 1]);
  Rng rng(2);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t s = 1 + rng.below(30);
    const double b = ns.betas()[s - 1];
    const double c0 = std::sqrt(ab[s - 1]) * b / (1 - ab[s]);
    const double cs = std::sqrt(1 - b) * (1 - ab[s - 1]) / (1 - ab[s]);
    CHECK(ns.coef_x0(s) + ns.coef_xs(s) == doctest::Approx(c0 + cs).epsilon(1e-12));
    const double a = rng.normal(), z = rng.normal();
    const Vector mu = posterior_mean(Vector::Constant(1, z), Vector::Constant(1, a), s, ns);
    CHECK(mu[0] == doctest::Approx(c0 * a + cs * z).epsilon(1e-12));
  }
  CHECK_THROWS_AS(posterior_mean(xs, x0, 31, ns), std::out_of_range);
}

TEST_CASE("rng state round trip") {
  Rng a(42);
  for (int i = 0; i < 10; ++i) a.normal();
  Rng b(0);
  b.set_state(a.state());
  for (int i = 0; i < 100; ++i) CHECK(a.normal() == b.normal());
  Rng s1(42, 1), s2(42, 2);
  CHECK(s1.next_u64() != s2.next_u64());
}
