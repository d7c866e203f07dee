#pragma once

#include "tsdiff/container.hpp"
#include "tsdiff/profiles.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace tsdiff {

struct GmmConfig {
  std::size_t components = 10;
  std::size_t max_iters = 500;
  double tol = 1e-6;           ///< stop when the mean log-likelihood gains less
  std::uint64_t seed = 0;
  bool allow_large = false;    ///< permit T > 96 (T x T covariances per component)
};

struct GmmModel {
  Vector weights;
  std::vector<Vector> means;
  std::vector<Matrix> covariances;
  std::vector<double> log_likelihood;  ///< mean log-likelihood after each EM iteration
  std::size_t ridge_events = 0;        ///< covariances that needed a ridge

  std::size_t components() const { return static_cast<std::size_t>(weights.size()); }
  std::size_t dim() const { return means.empty() ? 0 : static_cast<std::size_t>(means.front().size()); }

  Container to_container() const;
  static GmmModel from_container(const Container& c);
};

/// EM with k-means++ seeding and full covariances.
GmmModel gmm_fit(const RowMatrix& data, const GmmConfig& cfg = {});

/// Mean log-density of the rows under the model.
double gmm_mean_log_likelihood(const GmmModel& model, const RowMatrix& data);

/// Component ~ Categorical(weights), then a Gaussian draw. Row i uses the
/// rng stream (seed, i).
RowMatrix gmm_sample(const GmmModel& model, std::size_t m, std::uint64_t seed);

void save_gmm(const GmmModel& model, const std::filesystem::path& path);
GmmModel load_gmm(const std::filesystem::path& path);

}  // namespace tsdiff
