#pragma once

#include "tsdiff/container.hpp"
#include "tsdiff/profiles.hpp"

#include <filesystem>
#include <span>
#include <vector>

namespace tsdiff {

/// Empirical CDF F(v) = #{x_i <= v} / n.
class Ecdf {
 public:
  /// Throws std::invalid_argument on empty or non-finite input.
  explicit Ecdf(std::vector<double> samples);

  double operator()(double v) const;
  /// Generalised inverse min{x : F(x) >= u}; u = 0 gives the minimum sample.
  double inverse(double u) const;
  /// Linear interpolation between consecutive order statistics at their
  /// plotting positions i/n (continuous variant of `inverse`).
  double inverse_interpolated(double u) const;

  std::size_t size() const { return sorted_.size(); }
  const std::vector<double>& sorted_values() const { return sorted_; }
  bool operator==(const Ecdf&) const = default;

 private:
  std::vector<double> sorted_;
};

Ecdf fit_ecdf(std::span<const double> samples);

struct CalibrationOptions {
  bool interpolate = false;
};

/// Per-column pairs (real F*_t, model F'_t); x' = F*_t^{-1}(F'_t(x)).
class MarginalCalibrator {
 public:
  MarginalCalibrator(std::vector<Ecdf> real, std::vector<Ecdf> model);

  std::size_t columns() const { return real_.size(); }
  const Ecdf& real(std::size_t t) const { return real_.at(t); }
  const Ecdf& model(std::size_t t) const { return model_.at(t); }

  double map(std::size_t t, double x, const CalibrationOptions& opt = {}) const;

  Container to_container() const;
  static MarginalCalibrator from_container(const Container& c);

 private:
  std::vector<Ecdf> real_;
  std::vector<Ecdf> model_;
};

/// Column-wise ECDFs; both sets must share T.
MarginalCalibrator build_calibrator(const ProfileSet& real, const ProfileSet& synthetic);
MarginalCalibrator build_calibrator(const RowMatrix& real, const RowMatrix& synthetic);

/// Applies the per-column map to every value; each column reads only itself.
RowMatrix calibrate(const MarginalCalibrator& cal, const RowMatrix& x, const CalibrationOptions& opt = {});
ProfileSet calibrate(const MarginalCalibrator& cal, const ProfileSet& x, const CalibrationOptions& opt = {});

void save_calibrator(const MarginalCalibrator& cal, const std::filesystem::path& path);
MarginalCalibrator load_calibrator(const std::filesystem::path& path);

}  // namespace tsdiff
