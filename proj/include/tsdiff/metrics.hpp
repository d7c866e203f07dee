#pragma once

#include "tsdiff/profiles.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace tsdiff {

struct GaussianSummary {
  Vector mean;
  Matrix covariance;
};

/// Sample mean and unbiased covariance (divisor N - 1). N >= 2.
GaussianSummary gaussian_summary(const RowMatrix& x);
inline GaussianSummary gaussian_summary(const ProfileSet& ps) { return gaussian_summary(ps.data()); }

/// Symmetric PSD square root by eigendecomposition; eigenvalues below zero
/// are clipped. Throws NumericError when the matrix is not PSD within
/// -1e-8 * trace.
Matrix psd_sqrt(const Matrix& a);

/// ||mu1 - mu2||^2 + tr(S1 + S2 - 2 (S1^{1/2} S2 S1^{1/2})^{1/2}).
double gfd(const GaussianSummary& a, const GaussianSummary& b);

/// Biased (V-statistic) MMD^2 with kernel exp(-d^2 / (2 h^2)). Without an
/// explicit bandwidth h is the median pairwise distance of the pooled rows.
double mmd(const RowMatrix& a, const RowMatrix& b, std::optional<double> bandwidth = std::nullopt);
double median_pairwise_distance(const RowMatrix& a, const RowMatrix& b);

/// Per-column 1-D statistics; the scalar versions average over columns.
Vector wd_columns(const RowMatrix& a, const RowMatrix& b);
Vector ks_columns(const RowMatrix& a, const RowMatrix& b);
/// KL(P_a || Q_b) of histograms on a shared grid over the pooled range.
Vector kl_columns(const RowMatrix& a, const RowMatrix& b, std::size_t bins = 64, double eps = 1e-10);

double wd_marginal(const RowMatrix& a, const RowMatrix& b);
double ks_marginal(const RowMatrix& a, const RowMatrix& b);
double kl_marginal(const RowMatrix& a, const RowMatrix& b, std::size_t bins = 64, double eps = 1e-10);

/// 1-D helpers on raw samples.
double wasserstein_1d(std::vector<double> a, std::vector<double> b);
double ks_1d(std::vector<double> a, std::vector<double> b);
double kl_1d(const std::vector<double>& a, const std::vector<double>& b, std::size_t bins = 64, double eps = 1e-10);

/// Shared histogram grid over the pooled range of one column.
struct Histogram {
  std::vector<double> edges;  // bins + 1
  std::vector<std::size_t> counts_a;
  std::vector<std::size_t> counts_b;
};
Histogram shared_histogram(const std::vector<double>& a, const std::vector<double>& b, std::size_t bins);

struct MetricValues {
  double mmd = 0, gfd = 0, kl = 0, wd = 0, ks = 0;
};

struct MetricConfig {
  std::size_t repeats = 10;
  std::optional<std::size_t> subset_size;  ///< default min(N_a, N_b, 1000)
  std::size_t kl_bins = 64;
  double kl_eps = 1e-10;
  std::optional<double> mmd_bandwidth;
  std::uint64_t seed = 0;
};

struct MetricReport {
  MetricValues mean;
  MetricValues std;  ///< population standard deviation over repeats
  std::vector<MetricValues> per_repeat;
  std::size_t subset_size = 0;
  std::size_t repeats = 0;
  std::uint64_t seed = 0;

  /// "key=value" lines, keys sorted.
  std::string to_text() const;
  /// Header plus one row per repeat.
  std::string to_csv() const;
};

MetricValues all_metrics(const RowMatrix& a, const RowMatrix& b, const MetricConfig& cfg = {});

/// Each repeat draws subsets without replacement from both sets (repeat r
/// uses rng stream (seed, r)).
MetricReport bootstrap_eval(const RowMatrix& a, const RowMatrix& b, const MetricConfig& cfg = {});

}  // namespace tsdiff
