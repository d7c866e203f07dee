#pragma once

#include "tsdiff/common.hpp"

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace tsdiff {

enum class Resolution { Min1, Min15, Min30, Hour1 };

/// Samples per day: 1440, 96, 48 or 24.
std::size_t steps_per_day(Resolution res);
std::chrono::seconds step_duration(Resolution res);
std::string to_string(Resolution res);
/// Accepts "1min", "15min", "30min", "1hour".
Resolution parse_resolution(std::string_view text);

/// N daily profiles of T samples each (one row per day).
class ProfileSet {
 public:
  /// Throws ShapeError if the row width does not match the resolution and
  /// std::invalid_argument if any value is non-finite.
  ProfileSet(RowMatrix data, Resolution res, std::string unit_label = "W");

  std::size_t size() const { return static_cast<std::size_t>(data_.rows()); }
  std::size_t steps() const { return static_cast<std::size_t>(data_.cols()); }
  bool empty() const { return data_.rows() == 0; }

  const RowMatrix& data() const { return data_; }
  Resolution resolution() const { return resolution_; }
  const std::string& unit_label() const { return unit_label_; }

  /// Rows selected by index, in the given order.
  ProfileSet select(const std::vector<std::size_t>& rows) const;

 private:
  RowMatrix data_;
  Resolution resolution_;
  std::string unit_label_;
};

struct ScalingParams {
  double min_val = 0.0;
  double max_val = 1.0;
};

struct TimedValue {
  std::chrono::sys_seconds time;
  double value = 0.0;
};

struct DailySplit {
  ProfileSet profiles;
  std::vector<std::string> warnings;
};

ProfileSet load_csv(const std::filesystem::path& path, Resolution res, bool skip_header = false);

/// Same layout as load_csv; values written with round-trip precision.
void write_csv(const std::filesystem::path& path, const RowMatrix& data);
inline void write_csv(const std::filesystem::path& path, const ProfileSet& ps) {
  write_csv(path, ps.data());
}

/// Cuts a regular series into complete UTC calendar days. Leading and
/// trailing partial days are dropped.
DailySplit split_daily(const std::vector<TimedValue>& series, Resolution res);

ScalingParams fit_scaler(const ProfileSet& ps);

/// Affine map [min, max] -> [-1, 1]; values outside the range map linearly outside.
ProfileSet scale(const ProfileSet& ps, const ScalingParams& sp);
ProfileSet unscale(const ProfileSet& ps, const ScalingParams& sp);
double scale_value(double x, const ScalingParams& sp);
double unscale_value(double y, const ScalingParams& sp);

/// Disjoint row partition (train, eval); each part keeps the original row order.
std::pair<ProfileSet, ProfileSet> train_eval_split(const ProfileSet& ps, double fraction,
                                                   std::uint64_t seed);

}  // namespace tsdiff
