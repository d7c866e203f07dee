#pragma once

#include "tsdiff/common.hpp"

#include <cstddef>
#include <string_view>
#include <vector>

namespace tsdiff {

/// Reverse-step variance choice: beta_s, or the true posterior variance beta~_s.
enum class PosteriorVariance { Beta, BetaTilde };

std::string_view to_string(PosteriorVariance v);
PosteriorVariance parse_posterior_variance(std::string_view text);

/// Per-step forward-process quantities for s = 1..S, precomputed in double
/// precision. alpha_bar is the running product of alpha (alpha_bar(0) = 1).
class NoiseSchedule {
 public:
  /// Cosine schedule: alpha_bar follows cos^2(((s/S + 0.008) / 1.008) * pi/2),
  /// normalised to 1 at s = 0, with beta clipped at 0.999.
  static NoiseSchedule cosine(std::size_t steps);

  /// Rebuilds every derived array from beta_1..beta_S.
  static NoiseSchedule from_betas(std::vector<double> betas);

  std::size_t steps() const { return betas_.size(); }

  double beta(std::size_t s) const { return betas_.at(s - 1); }
  double alpha(std::size_t s) const { return 1.0 - beta(s); }
  double alpha_bar(std::size_t s) const { return alpha_bar_.at(s); }
  /// beta~_s = beta_s (1 - alpha_bar_{s-1}) / (1 - alpha_bar_s); beta~_1 := beta_1.
  double posterior_var(std::size_t s) const { return posterior_var_.at(s - 1); }
  double coef_x0(std::size_t s) const { return coef_x0_.at(s - 1); }
  double coef_xs(std::size_t s) const { return coef_xs_.at(s - 1); }
  double variance(std::size_t s, PosteriorVariance kind) const {
    return kind == PosteriorVariance::Beta ? beta(s) : posterior_var(s);
  }

  const std::vector<double>& betas() const { return betas_; }

 private:
  explicit NoiseSchedule(std::vector<double> betas);

  std::vector<double> betas_;
  std::vector<double> alpha_bar_;  // index 0..S
  std::vector<double> posterior_var_;
  std::vector<double> coef_x0_;
  std::vector<double> coef_xs_;
};

/// x_s = sqrt(alpha_bar_s) x0 + sqrt(1 - alpha_bar_s) noise.
Vector forward_sample(const Vector& x0, std::size_t s, const Vector& noise,
                      const NoiseSchedule& ns);

/// Mean of q(x_{s-1} | x_s, x0): coef_x0[s] x0 + coef_xs[s] x_s.
Vector posterior_mean(const Vector& xs, const Vector& x0, std::size_t s, const NoiseSchedule& ns);

}  // namespace tsdiff
