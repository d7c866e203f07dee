#include "tsdiff/synthetic.hpp"

#include "tsdiff/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace tsdiff {

ProfileSet synthesize_profiles(std::size_t n, Resolution res, std::uint64_t seed) {
  const std::size_t t_len = steps_per_day(res);
  const double two_pi = 2.0 * std::numbers::pi;
  RowMatrix data(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(t_len));
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(seed, i);
    const bool cold = rng.uniform() < 0.5;
    const double base = 120.0 + 60.0 * rng.uniform();
    // cold regime
    const double period = 2.0 + 2.0 * rng.uniform();  // hours
    const double duty = 0.35 + 0.35 * rng.uniform();
    const double phase = period * rng.uniform();
    const double on_power = 1500.0 + 250.0 * rng.normal();
    // mild regime
    const double morning = 300.0 + 300.0 * rng.uniform();
    const double evening = 400.0 + 400.0 * rng.uniform();
    const double shift = rng.normal();  // hours

    for (std::size_t t = 0; t < t_len; ++t) {
      const double h = 24.0 * static_cast<double>(t) / static_cast<double>(t_len);
      double v = base + 40.0 * std::sin(two_pi * (h - 9.0) / 24.0);
      if (cold) {
        const double cycle = std::fmod(h + phase, period) / period;
        if (cycle < duty) v += on_power;
      } else {
        const double hm = h - 7.0 - shift, he = h - 19.0 - shift;
        v += morning * std::exp(-0.5 * hm * hm) + evening * std::exp(-0.5 * he * he / 2.25);
      }
      v += 25.0 * rng.normal();
      data(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) = std::max(0.0, v);
    }
  }
  return ProfileSet(std::move(data), res, "W");
}

}  // namespace tsdiff
