#pragma once

#include "tsdiff/container.hpp"
#include "tsdiff/denoiser.hpp"
#include "tsdiff/profiles.hpp"
#include "tsdiff/rng.hpp"
#include "tsdiff/schedule.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tsdiff {

struct TrainConfig {
  std::size_t iterations = 1000;
  std::size_t batch_size = 64;
  double learning_rate = 1e-4;
  double ema_decay = 0.999;
  std::uint64_t seed = 0;
  PosteriorVariance posterior_variance = PosteriorVariance::BetaTilde;
  double weight_decay = 0.01;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip = 1.0;  ///< global-norm clip; <= 0 disables

  /// Throws ConfigError.
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

/// Everything needed to resume training or sample.
struct Checkpoint {
  Checkpoint(DenoiserConfig dcfg, TrainConfig tcfg, Resolution res, NoiseSchedule ns, ScalingParams sp);

  DenoiserConfig denoiser;
  TrainConfig train;
  Resolution resolution;
  NoiseSchedule schedule;
  ScalingParams scaling;
  DenoiserParams params;
  DenoiserParams ema;
  Vector adam_m;
  Vector adam_v;
  std::size_t iteration = 0;
  std::string rng_state;
};

/// Fresh checkpoint: initialised params (EMA copy), zero optimizer state and
/// a training rng derived from tcfg.seed.
Checkpoint initial_checkpoint(const DenoiserConfig& dcfg, const TrainConfig& tcfg, Resolution res,
                              const NoiseSchedule& ns, const ScalingParams& sp);

/// Mini-batch AdamW on the mean-matching loss with gradient clipping and EMA.
class Trainer {
 public:
  /// `data` holds scaled profiles in [-1, 1]; T must match the config.
  Trainer(const ProfileSet& data, Checkpoint ckpt);

  /// One iteration: draw a batch (with replacement), steps and noise from
  /// the training rng, then update. Returns the loss before the update.
  double step();

  /// Update on a caller-supplied batch, steps and noise.
  double step_on(const RowMatrix& batch, std::span<const std::size_t> steps, const RowMatrix& noise);

  /// Runs up to tcfg.iterations total; `on_step(iteration, loss)` after each.
  void run(const std::function<void(std::size_t, double)>& on_step = {});

  const Checkpoint& checkpoint() const { return ckpt_; }
  std::size_t iteration() const { return ckpt_.iteration; }

 private:
  void apply(const LossResult& res);

  Checkpoint ckpt_;
  RowMatrix data_;
  Denoiser net_;
  Rng rng_;
};

/// Trains from scratch on scaled data.
Checkpoint train(const ProfileSet& scaled, const DenoiserConfig& dcfg, const TrainConfig& tcfg,
                 const NoiseSchedule& ns, const ScalingParams& sp,
                 const std::function<void(std::size_t, double)>& on_step = {});

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);
Container checkpoint_to_container(const Checkpoint& ckpt);
Checkpoint checkpoint_from_container(const Container& c);

// --- sampling ---------------------------------------------------------------

struct SampleOptions {
  bool final_step_noise = false;  ///< add noise on the last reverse step as well
  bool use_ema = true;
  PosteriorVariance variance = PosteriorVariance::BetaTilde;
  std::size_t chunk_rows = 256;   ///< rows per network call; does not change results
};

/// Batched reverse-step mean mu(x_s, s); one step per row.
using MeanFunction = std::function<RowMatrix(const RowMatrix& xs, std::span<const std::size_t> steps)>;

/// Kept diffusion steps floor(i S / n), i = 1..n (ascending, last = S).
std::vector<std::size_t> strided_steps(std::size_t total, std::size_t n_steps);

/// Ancestral sampling of m rows of the given width. Row i uses the rng
/// stream (seed, i) so results do not depend on chunking.
RowMatrix sample_with(const MeanFunction& mean, const NoiseSchedule& ns, std::size_t m, std::size_t width,
                      std::uint64_t seed, const SampleOptions& opt = {});

/// Ancestral sampling over strided steps with retimed alpha_bar; equals
/// `sample_with` when n_steps = S.
RowMatrix sample_strided_with(const MeanFunction& mean, const NoiseSchedule& ns, std::size_t m,
                              std::size_t width, std::size_t n_steps, std::uint64_t seed,
                              const SampleOptions& opt = {});

/// Network-backed mean function of a checkpoint.
MeanFunction model_mean(const Checkpoint& ckpt, bool use_ema = true);

/// M profiles in the scaled domain. Variance defaults to the checkpoint's
/// training choice unless overridden in `opt`.
ProfileSet sample(const Checkpoint& ckpt, std::size_t m, std::uint64_t seed,
                  std::optional<SampleOptions> opt = std::nullopt);
ProfileSet sample_strided(const Checkpoint& ckpt, std::size_t m, std::size_t n_steps, std::uint64_t seed,
                          std::optional<SampleOptions> opt = std::nullopt);

}  // namespace tsdiff
