#pragma once

#include "cli/run_config.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace tsdiff::cli {

/// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kRuntimeError = 1;
inline constexpr int kUsageError = 2;

struct CommandContext {
  RunConfig config;
  std::filesystem::path out_dir = ".";
  bool svg = false;
  std::ostream* log = nullptr;
};

// Each command writes its outputs plus resolved_config.txt into out_dir.
void cmd_train(const CommandContext& ctx);                // model.tsdf, loss.csv
void cmd_generate(const CommandContext& ctx);             // samples.csv
void cmd_calibrate(const CommandContext& ctx);            // calibrated.csv
void cmd_evaluate(const CommandContext& ctx);             // report.txt, report.csv, histograms.csv, covariance_*.csv
void cmd_baseline_gmm(const CommandContext& ctx);         // gmm.tsdf, gmm_samples.csv
void cmd_synthesize_dataset(const CommandContext& ctx);   // dataset.csv

/// Full command line without the program name. Errors go to `err` and are
/// mapped to exit codes: ConfigError and usage problems give 2, everything
/// else 1.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace tsdiff::cli
