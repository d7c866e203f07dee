#include "tsdiff/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace tsdiff {

std::string_view to_string(PosteriorVariance v) {
  return v == PosteriorVariance::Beta ? "beta" : "beta_tilde";
}

PosteriorVariance parse_posterior_variance(std::string_view text) {
  if (text == "beta") return PosteriorVariance::Beta;
  if (text == "beta_tilde") return PosteriorVariance::BetaTilde;
  throw std::invalid_argument("posterior_variance must be 'beta' or 'beta_tilde', got '" +
                              std::string(text) + "'");
}

NoiseSchedule NoiseSchedule::cosine(std::size_t steps) {
  if (steps < 2) throw std::invalid_argument("cosine schedule needs at least 2 steps");
  constexpr double offset = 0.008;
  constexpr double max_beta = 0.999;
  const double total = static_cast<double>(steps);
  auto f = [&](double s) {
    const double c = std::cos((s / total + offset) / (1.0 + offset) * std::numbers::pi / 2.0);
    return c * c;
  };
  const double f0 = f(0.0);
  std::vector<double> betas(steps);
  for (std::size_t s = 1; s <= steps; ++s) {
    const double ratio = (f(static_cast<double>(s)) / f0) / (f(static_cast<double>(s - 1)) / f0);
    betas[s - 1] = std::min(1.0 - ratio, max_beta);
  }
  return NoiseSchedule(std::move(betas));
}

NoiseSchedule NoiseSchedule::from_betas(std::vector<double> betas) {
  return NoiseSchedule(std::move(betas));
}

NoiseSchedule::NoiseSchedule(std::vector<double> betas) : betas_(std::move(betas)) {
  const std::size_t n = betas_.size();
  if (n < 2) throw std::invalid_argument("noise schedule needs at least 2 steps");
  for (double b : betas_) {
    if (!(b > 0.0 && b < 1.0)) {
      throw std::invalid_argument("noise schedule beta outside (0, 1): " + std::to_string(b));
    }
  }

  alpha_bar_.assign(n + 1, 1.0);
  for (std::size_t s = 1; s <= n; ++s) alpha_bar_[s] = alpha_bar_[s - 1] * (1.0 - betas_[s - 1]);

  posterior_var_.resize(n);
  coef_x0_.resize(n);
  coef_xs_.resize(n);
  for (std::size_t s = 1; s <= n; ++s) {
    const double b = betas_[s - 1];
    const double ab = alpha_bar_[s];
    const double ab_prev = alpha_bar_[s - 1];
    posterior_var_[s - 1] = s == 1 ? b : b * (1.0 - ab_prev) / (1.0 - ab);
    coef_x0_[s - 1] = std::sqrt(ab_prev) * b / (1.0 - ab);
    coef_xs_[s - 1] = std::sqrt(1.0 - b) * (1.0 - ab_prev) / (1.0 - ab);
  }
}

namespace {

void check_step(std::size_t s, const NoiseSchedule& ns) {
  if (s < 1 || s > ns.steps()) {
    throw std::out_of_range("diffusion step " + std::to_string(s) + " outside [1, " +
                            std::to_string(ns.steps()) + "]");
  }
}

}  // namespace

Vector forward_sample(const Vector& x0, std::size_t s, const Vector& noise,
                      const NoiseSchedule& ns) {
  check_step(s, ns);
  if (noise.size() != x0.size()) throw ShapeError("forward_sample: noise length mismatch");
  const double ab = ns.alpha_bar(s);
  return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * noise;
}

Vector posterior_mean(const Vector& xs, const Vector& x0, std::size_t s, const NoiseSchedule& ns) {
  check_step(s, ns);
  if (xs.size() != x0.size()) throw ShapeError("posterior_mean: length mismatch");
  return ns.coef_x0(s) * x0 + ns.coef_xs(s) * xs;
}

}  // namespace tsdiff
