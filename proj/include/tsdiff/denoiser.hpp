#pragma once

#include "tsdiff/common.hpp"
#include "tsdiff/rng.hpp"
#include "tsdiff/schedule.hpp"

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tsdiff {

/// AsPrinted: x~ = LN(x) + MHA(x), out = LN(x~) + FFN(x~).
/// PreLn:     x~ = x + MHA(LN(x)), out = x~ + FFN(LN(x~)).
enum class BlockVariant { AsPrinted, PreLn };

std::string_view to_string(BlockVariant v);
BlockVariant parse_block_variant(std::string_view text);

struct DenoiserConfig {
  std::size_t seq_len = 24;       ///< T, samples per profile
  std::size_t in_channels = 1;    ///< d_in
  std::size_t fold = 1;           ///< r, consecutive steps folded into channels
  std::size_t d_model = 64;       ///< hidden width d'
  std::size_t layers = 2;         ///< transformer blocks L
  std::size_t heads = 4;          ///< attention heads H
  std::size_t kernel_half_width = 3;  ///< k; initial conv kernel is 2k+1 wide
  std::size_t ffn_mult = 4;
  BlockVariant block_variant = BlockVariant::AsPrinted;

  /// Throws std::invalid_argument on inconsistent sizes.
  void validate() const;

  std::size_t folded_len() const { return seq_len / fold; }
  std::size_t folded_channels() const { return in_channels * fold; }
  std::size_t head_dim() const { return d_model / heads; }
  std::size_t ffn_width() const { return ffn_mult * d_model; }
  std::size_t kernel_size() const { return 2 * kernel_half_width + 1; }

  bool operator==(const DenoiserConfig&) const = default;
};

struct TensorInfo {
  std::string name;
  std::vector<std::size_t> shape;
  std::size_t offset = 0;
  std::size_t size = 0;
};

/// Ordered list of named tensors packed into one flat vector. The order and
/// shapes are a pure function of the config.
class ParamLayout {
 public:
  explicit ParamLayout(const DenoiserConfig& cfg);

  const std::vector<TensorInfo>& tensors() const { return tensors_; }
  const TensorInfo& at(std::string_view name) const;
  std::size_t total_size() const { return total_; }

 private:
  void add(std::string name, std::vector<std::size_t> shape);

  std::vector<TensorInfo> tensors_;
  std::size_t total_ = 0;
};

std::size_t parameter_count(const DenoiserConfig& cfg);

/// Learnable parameters of the denoiser, stored flat (row-major per tensor).
class DenoiserParams {
 public:
  /// All-zero parameters.
  explicit DenoiserParams(const DenoiserConfig& cfg);

  /// Fan-in uniform weights, zero biases, unit LayerNorm gains, and zero
  /// output layers for both scale/shift encodings.
  static DenoiserParams initialize(const DenoiserConfig& cfg, Rng& rng);

  const DenoiserConfig& config() const { return config_; }
  const ParamLayout& layout() const { return layout_; }

  Vector& values() { return values_; }
  const Vector& values() const { return values_; }

  /// Rank-2 view (rank-1 tensors map to a column); conv weights are rank 3
  /// and must be read through `tap`.
  Eigen::Map<RowMatrix> matrix(std::string_view name);
  Eigen::Map<const RowMatrix> matrix(std::string_view name) const;
  Eigen::Map<const RowMatrix> tap(std::size_t j) const;

  bool operator==(const DenoiserParams& o) const {
    return config_ == o.config_ && values_.size() == o.values_.size() && values_ == o.values_;
  }

 private:
  DenoiserConfig config_;
  ParamLayout layout_;
  Vector values_;
};

/// Map a flat gradient vector with the same layout as the params.
Eigen::Map<RowMatrix> tensor_view(Vector& flat, const ParamLayout& layout, std::string_view name);

// --- individual stages ------------------------------------------------------

/// [d x T] -> [d*r x T/r]; original step tau*r + j of channel c lands at
/// folded position tau, channel c*r + j.
Matrix fold(const Matrix& x, std::size_t r);
Matrix unfold(const Matrix& y, std::size_t r);

/// pe_{2i} = sin(pos / 10000^{2i/d}), pe_{2i+1} = cos(pos / 10000^{2i/d}); d even.
Vector sinusoidal_pe(double pos, std::size_t d);

enum class Encoding { DiffusionStep, TimeStep };

/// (1 + sigma) * x + delta with sigma, delta from the two-layer SiLU MLP of the
/// chosen encoding. DiffusionStep applies one (sigma(pos), delta(pos)) to every
/// column of x ([C x T']); TimeStep uses the column index t as position.
Matrix step_embed_apply(const Matrix& x, std::size_t pos, const DenoiserParams& params,
                        Encoding which);

/// Circular 1-D convolution [d_in*r x T'] -> [d_model x T'].
Matrix initial_conv(const Matrix& x, const DenoiserParams& params);

/// One transformer block l (0-based) on [d_model x T'].
Matrix transformer_block(const Matrix& x, const DenoiserParams& params, std::size_t l);

// --- whole network ----------------------------------------------------------

/// Intermediate values kept by `Denoiser::forward` for the backward pass.
struct ForwardTrace;

class Denoiser {
 public:
  explicit Denoiser(DenoiserConfig cfg);

  const DenoiserConfig& config() const { return cfg_; }

  /// Batched mean prediction. `xs` holds one sample per row, channel-major
  /// ([d_in x T] flattened); `steps` has one diffusion step per row.
  RowMatrix forward(const DenoiserParams& params, const RowMatrix& xs,
                    std::span<const std::size_t> steps) const;

  RowMatrix forward(const DenoiserParams& params, const RowMatrix& xs,
                    std::span<const std::size_t> steps, ForwardTrace& trace) const;

  /// Adds d(loss)/d(theta) to `grad` given d(loss)/d(output).
  void backward(const DenoiserParams& params, const ForwardTrace& trace, const RowMatrix& d_out,
                Vector& grad) const;

  /// Attention score entries evaluated per sample: L * H * (T/r)^2.
  std::size_t attention_score_elements() const;

 private:
  DenoiserConfig cfg_;
};

struct ForwardTrace {
  ForwardTrace();
  ~ForwardTrace();
  ForwardTrace(ForwardTrace&&) noexcept;
  ForwardTrace& operator=(ForwardTrace&&) noexcept;

  /// Score-matrix entries actually computed during the traced pass.
  std::size_t score_elements = 0;

  struct Impl;
  std::unique_ptr<Impl> impl;
};

struct LossResult {
  double loss = 0.0;
  Vector grad;
  std::vector<std::size_t> steps;
};

/// Weighted mean-matching loss
///   (1/B) sum_i ||mu~_{s_i}(x_{s_i}, x0_i) - mu_theta(x_{s_i}, s_i)||^2 / (2 var_{s_i})
/// with the given steps and noise (one noise row per batch row).
LossResult loss_with(const Denoiser& net, const DenoiserParams& params, const RowMatrix& batch,
                     std::span<const std::size_t> steps, const RowMatrix& noise,
                     const NoiseSchedule& ns,
                     PosteriorVariance variance = PosteriorVariance::BetaTilde);

/// Draws s_i ~ U{1..S} for every row, then standard-normal noise row by row,
/// and evaluates `loss_with`.
LossResult loss_simple(const Denoiser& net, const DenoiserParams& params, const RowMatrix& batch,
                       const NoiseSchedule& ns, Rng& rng,
                       PosteriorVariance variance = PosteriorVariance::BetaTilde);

}  // namespace tsdiff
