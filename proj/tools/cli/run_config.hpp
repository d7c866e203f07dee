#pragma once

#include "tsdiff/calibration.hpp"
#include "tsdiff/diffusion.hpp"
#include "tsdiff/gmm.hpp"
#include "tsdiff/metrics.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

namespace tsdiff::cli {

/// Flat key=value run configuration covering every module's settings.
/// Every key has a default; unknown keys and malformed values raise
/// ConfigError. Text form is one sorted `key=value` per line, `#` comments.
class RunConfig {
 public:
  RunConfig();

  static RunConfig from_text(const std::string& text, const std::string& origin = "config");
  static RunConfig load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  /// Parses `key=value`.
  void set_assignment(const std::string& assignment);
  const std::string& get(const std::string& key) const;
  std::string to_text() const;
  bool operator==(const RunConfig&) const = default;

  std::string get_string(const std::string& key) const { return get(key); }
  std::uint64_t get_u64(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  std::uint64_t seed() const { return get_u64("seed"); }
  Resolution resolution() const;
  bool header() const { return get_bool("data.header"); }
  DenoiserConfig denoiser() const;
  TrainConfig train() const;
  std::size_t schedule_steps() const { return get_u64("schedule.steps"); }
  SampleOptions sample_options(PosteriorVariance trained_with) const;
  CalibrationOptions calibration() const;
  MetricConfig metrics() const;
  GmmConfig gmm() const;

  /// All known keys with their defaults.
  static const std::map<std::string, std::string>& defaults();

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace tsdiff::cli
