#include "tsdiff/denoiser.hpp"

#include <algorithm>
#include <cmath>

namespace tsdiff {

std::string_view to_string(BlockVariant v) {
  return v == BlockVariant::AsPrinted ? "as_printed" : "pre_ln";
}

BlockVariant parse_block_variant(std::string_view text) {
  if (text == "as_printed") return BlockVariant::AsPrinted;
  if (text == "pre_ln") return BlockVariant::PreLn;
  throw std::invalid_argument("block_variant must be 'as_printed' or 'pre_ln', got '" +
                              std::string(text) + "'");
}

void DenoiserConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("DenoiserConfig: " + msg); };
  if (seq_len == 0) fail("seq_len must be positive");
  if (in_channels == 0) fail("in_channels must be positive");
  if (fold == 0) fail("fold must be >= 1");
  if (seq_len % fold != 0) {
    fail("seq_len " + std::to_string(seq_len) + " is not divisible by fold " + std::to_string(fold));
  }
  if (layers == 0) fail("layers must be >= 1");
  if (heads == 0) fail("heads must be >= 1");
  if (d_model == 0 || d_model % 2 != 0) fail("d_model must be positive and even");
  if (d_model % heads != 0) {
    fail("d_model " + std::to_string(d_model) + " is not divisible by heads " +
         std::to_string(heads));
  }
  if (ffn_mult == 0) fail("ffn_mult must be positive");
}

// --- layout -----------------------------------------------------------------

namespace {

std::string block_name(std::size_t l, const char* leaf) {
  return "block" + std::to_string(l) + "." + leaf;
}

}  // namespace

ParamLayout::ParamLayout(const DenoiserConfig& cfg) {
  cfg.validate();
  const std::size_t c = cfg.folded_channels();
  const std::size_t dm = cfg.d_model;
  const std::size_t ff = cfg.ffn_width();

  auto add_embed = [&](const std::string& prefix, std::size_t out) {
    add(prefix + ".w1", {dm, dm});
    add(prefix + ".b1", {dm});
    add(prefix + ".w2_scale", {out, dm});
    add(prefix + ".b2_scale", {out});
    add(prefix + ".w2_shift", {out, dm});
    add(prefix + ".b2_shift", {out});
  };

  add_embed("step_embed", c);
  add("conv.weight", {cfg.kernel_size(), dm, c});
  add("conv.bias", {dm});
  add_embed("time_embed", dm);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    add(block_name(l, "wq"), {dm, dm});
    add(block_name(l, "wk"), {dm, dm});
    add(block_name(l, "wv"), {dm, dm});
    add(block_name(l, "ln1.gamma"), {dm});
    add(block_name(l, "ln1.beta"), {dm});
    add(block_name(l, "ffn.w1"), {ff, dm});
    add(block_name(l, "ffn.b1"), {ff});
    add(block_name(l, "ffn.w2"), {dm, ff});
    add(block_name(l, "ffn.b2"), {dm});
    add(block_name(l, "ln2.gamma"), {dm});
    add(block_name(l, "ln2.beta"), {dm});
  }
  add("out.weight", {c, 2 * dm});
  add("out.bias", {c});
}

void ParamLayout::add(std::string name, std::vector<std::size_t> shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  tensors_.push_back(TensorInfo{std::move(name), std::move(shape), total_, n});
  total_ += n;
}

const TensorInfo& ParamLayout::at(std::string_view name) const {
  for (const auto& t : tensors_) {
    if (t.name == name) return t;
  }
  throw std::out_of_range("no parameter tensor named '" + std::string(name) + "'");
}

std::size_t parameter_count(const DenoiserConfig& cfg) { return ParamLayout(cfg).total_size(); }

namespace {

std::pair<Eigen::Index, Eigen::Index> matrix_dims(const TensorInfo& t) {
  if (t.shape.size() == 1) return {static_cast<Eigen::Index>(t.shape[0]), 1};
  if (t.shape.size() == 2) {
    return {static_cast<Eigen::Index>(t.shape[0]), static_cast<Eigen::Index>(t.shape[1])};
  }
  throw std::logic_error("tensor '" + t.name + "' is not rank 1 or 2");
}

}  // namespace

Eigen::Map<RowMatrix> tensor_view(Vector& flat, const ParamLayout& layout, std::string_view name) {
  const auto& t = layout.at(name);
  const auto [r, c] = matrix_dims(t);
  return {flat.data() + t.offset, r, c};
}

DenoiserParams::DenoiserParams(const DenoiserConfig& cfg)
    : config_(cfg), layout_(cfg), values_(Vector::Zero(static_cast<Eigen::Index>(layout_.total_size()))) {}

Eigen::Map<RowMatrix> DenoiserParams::matrix(std::string_view name) {
  return tensor_view(values_, layout_, name);
}

Eigen::Map<const RowMatrix> DenoiserParams::matrix(std::string_view name) const {
  const auto& t = layout_.at(name);
  const auto [r, c] = matrix_dims(t);
  return {values_.data() + t.offset, r, c};
}

Eigen::Map<const RowMatrix> DenoiserParams::tap(std::size_t j) const {
  const auto& t = layout_.at("conv.weight");
  const auto dm = static_cast<Eigen::Index>(t.shape[1]);
  const auto c = static_cast<Eigen::Index>(t.shape[2]);
  return {values_.data() + t.offset + j * static_cast<std::size_t>(dm * c), dm, c};
}

DenoiserParams DenoiserParams::initialize(const DenoiserConfig& cfg, Rng& rng) {
  DenoiserParams p(cfg);
  auto ends_with = [](const std::string& s, std::string_view suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  for (const auto& t : p.layout_.tensors()) {
    double* data = p.values_.data() + t.offset;
    const bool zero_output = ends_with(t.name, ".w2_scale") || ends_with(t.name, ".w2_shift");
    if (ends_with(t.name, ".gamma")) {
      std::fill(data, data + t.size, 1.0);
    } else if (t.shape.size() == 1 || zero_output) {
      std::fill(data, data + t.size, 0.0);
    } else {
      const std::size_t fan_in = t.shape.size() == 3 ? t.shape[0] * t.shape[2] : t.shape[1];
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      for (std::size_t i = 0; i < t.size; ++i) data[i] = bound * (2.0 * rng.uniform() - 1.0);
    }
  }
  return p;
}

// --- stage primitives ---------------------------------------------------------

Matrix fold(const Matrix& x, std::size_t r) {
  const auto d = static_cast<std::size_t>(x.rows());
  const auto t = static_cast<std::size_t>(x.cols());
  if (r == 0 || t % r != 0) {
    throw ShapeError("fold: length " + std::to_string(t) + " not divisible by " + std::to_string(r));
  }
  const std::size_t tp = t / r;
  Matrix y(static_cast<Eigen::Index>(d * r), static_cast<Eigen::Index>(tp));
  for (std::size_t c = 0; c < d; ++c)
    for (std::size_t tau = 0; tau < tp; ++tau)
      for (std::size_t j = 0; j < r; ++j)
        y(static_cast<Eigen::Index>(c * r + j), static_cast<Eigen::Index>(tau)) =
            x(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(tau * r + j));
  return y;
}

Matrix unfold(const Matrix& y, std::size_t r) {
  const auto dr = static_cast<std::size_t>(y.rows());
  if (r == 0 || dr % r != 0) {
    throw ShapeError("unfold: channels " + std::to_string(dr) + " not divisible by " +
                     std::to_string(r));
  }
  const std::size_t d = dr / r;
  const auto tp = static_cast<std::size_t>(y.cols());
  Matrix x(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(tp * r));
  for (std::size_t c = 0; c < d; ++c)
    for (std::size_t tau = 0; tau < tp; ++tau)
      for (std::size_t j = 0; j < r; ++j)
        x(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(tau * r + j)) =
            y(static_cast<Eigen::Index>(c * r + j), static_cast<Eigen::Index>(tau));
  return x;
}

Vector sinusoidal_pe(double pos, std::size_t d) {
  if (d == 0 || d % 2 != 0) throw std::invalid_argument("sinusoidal_pe: dimension must be even");
  if (pos < 0) throw std::invalid_argument("sinusoidal_pe: position must be non-negative");
  Vector pe(static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; 2 * i < d; ++i) {
    const double angle =
        pos / std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(d));
    pe(static_cast<Eigen::Index>(2 * i)) = std::sin(angle);
    pe(static_cast<Eigen::Index>(2 * i + 1)) = std::cos(angle);
  }
  return pe;
}

namespace {

constexpr double kLayerNormEps = 1e-5;

double sigmoid(double a) { return 1.0 / (1.0 + std::exp(-a)); }

Matrix silu(const Matrix& a) {
  return a.unaryExpr([](double v) { return v * sigmoid(v); });
}

Matrix silu_grad(const Matrix& a) {
  return a.unaryExpr([](double v) {
    const double s = sigmoid(v);
    return s * (1.0 + v * (1.0 - s));
  });
}

/// r[:, b*tp + t] = m[:, b*tp + (t - offset) mod tp]
Matrix shift_cols(const Matrix& m, std::size_t tp, long offset) {
  Matrix r(m.rows(), m.cols());
  const auto n = static_cast<long>(m.cols());
  const auto period = static_cast<long>(tp);
  for (long base = 0; base < n; base += period) {
    for (long t = 0; t < period; ++t) {
      const long src = ((t - offset) % period + period) % period;
      r.col(base + t) = m.col(base + src);
    }
  }
  return r;
}

struct LayerNormCache {
  Matrix xhat;
  Eigen::RowVectorXd inv_std;
};

Matrix layer_norm(const Matrix& x, const Eigen::Ref<const Vector>& gamma,
                  const Eigen::Ref<const Vector>& beta, LayerNormCache& cache) {
  const double d = static_cast<double>(x.rows());
  const Eigen::RowVectorXd mean = x.colwise().mean();
  Matrix centered = x.rowwise() - mean;
  const Eigen::RowVectorXd var = centered.array().square().colwise().sum() / d;
  cache.inv_std = (var.array() + kLayerNormEps).rsqrt();
  cache.xhat = centered.array().rowwise() * cache.inv_std.array();
  Matrix out = (cache.xhat.array().colwise() * gamma.array()).colwise() + beta.array();
  return out;
}

Matrix layer_norm_backward(const Matrix& d_out, const Eigen::Ref<const Vector>& gamma,
                           const LayerNormCache& cache, Eigen::Map<RowMatrix> d_gamma,
                           Eigen::Map<RowMatrix> d_beta) {
  d_gamma.col(0) += (d_out.array() * cache.xhat.array()).rowwise().sum().matrix();
  d_beta.col(0) += d_out.rowwise().sum();
  const Matrix dxhat = d_out.array().colwise() * gamma.array();
  const Eigen::RowVectorXd m1 = dxhat.colwise().mean();
  const Eigen::RowVectorXd m2 = (dxhat.array() * cache.xhat.array()).colwise().mean();
  Matrix dx = dxhat.rowwise() - m1;
  dx -= (cache.xhat.array().rowwise() * m2.array()).matrix();
  dx = dx.array().rowwise() * cache.inv_std.array();
  return dx;
}

struct MlpCache {
  Matrix e;   // positional encodings, one column per position
  Matrix a1;  // pre-activation
  Matrix h1;  // SiLU(a1)
};

/// scale = W2s SiLU(W1 e + b1) + b2s, shift = W2h SiLU(W1 e + b1) + b2h.
void embed_mlp(const DenoiserParams& p, const std::string& prefix, Matrix e, MlpCache& cache,
               Matrix& scale, Matrix& shift) {
  cache.e = std::move(e);
  cache.a1 = (p.matrix(prefix + ".w1") * cache.e).colwise() + p.matrix(prefix + ".b1").col(0);
  cache.h1 = silu(cache.a1);
  scale = (p.matrix(prefix + ".w2_scale") * cache.h1).colwise() +
          p.matrix(prefix + ".b2_scale").col(0);
  shift = (p.matrix(prefix + ".w2_shift") * cache.h1).colwise() +
          p.matrix(prefix + ".b2_shift").col(0);
}

void embed_mlp_backward(const DenoiserParams& p, const std::string& prefix, const MlpCache& cache,
                        const Matrix& d_scale, const Matrix& d_shift, Vector& grad) {
  const auto& layout = p.layout();
  tensor_view(grad, layout, prefix + ".w2_scale") += d_scale * cache.h1.transpose();
  tensor_view(grad, layout, prefix + ".b2_scale").col(0) += d_scale.rowwise().sum();
  tensor_view(grad, layout, prefix + ".w2_shift") += d_shift * cache.h1.transpose();
  tensor_view(grad, layout, prefix + ".b2_shift").col(0) += d_shift.rowwise().sum();
  const Matrix dh1 = p.matrix(prefix + ".w2_scale").transpose() * d_scale +
                     p.matrix(prefix + ".w2_shift").transpose() * d_shift;
  const Matrix da1 = dh1.cwiseProduct(silu_grad(cache.a1));
  tensor_view(grad, layout, prefix + ".w1") += da1 * cache.e.transpose();
  tensor_view(grad, layout, prefix + ".b1").col(0) += da1.rowwise().sum();
}

Matrix encodings(std::span<const std::size_t> positions, std::size_t d) {
  Matrix e(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(positions.size()));
  for (std::size_t i = 0; i < positions.size(); ++i) {
    e.col(static_cast<Eigen::Index>(i)) = sinusoidal_pe(static_cast<double>(positions[i]), d);
  }
  return e;
}

std::vector<std::size_t> iota_positions(std::size_t start, std::size_t n) {
  std::vector<std::size_t> pos(n);
  for (std::size_t i = 0; i < n; ++i) pos[i] = start + i;
  return pos;
}

Matrix conv_forward(const DenoiserParams& p, const Matrix& u, std::size_t tp) {
  const auto& cfg = p.config();
  const long k = static_cast<long>(cfg.kernel_half_width);
  Matrix v = Matrix::Zero(static_cast<Eigen::Index>(cfg.d_model), u.cols());
  for (std::size_t j = 0; j < cfg.kernel_size(); ++j) {
    const long tau = static_cast<long>(j) - k;
    v.noalias() += p.tap(j) * shift_cols(u, tp, tau);
  }
  v.colwise() += p.matrix("conv.bias").col(0);
  return v;
}

Matrix conv_backward(const DenoiserParams& p, const Matrix& u, std::size_t tp, const Matrix& dv,
                     Vector& grad) {
  const auto& cfg = p.config();
  const long k = static_cast<long>(cfg.kernel_half_width);
  const auto& info = p.layout().at("conv.weight");
  const auto dm = static_cast<Eigen::Index>(cfg.d_model);
  const auto c = static_cast<Eigen::Index>(cfg.folded_channels());
  tensor_view(grad, p.layout(), "conv.bias").col(0) += dv.rowwise().sum();
  Matrix du = Matrix::Zero(u.rows(), u.cols());
  for (std::size_t j = 0; j < cfg.kernel_size(); ++j) {
    const long tau = static_cast<long>(j) - k;
    Eigen::Map<RowMatrix> dw(grad.data() + info.offset + j * static_cast<std::size_t>(dm * c), dm, c);
    dw += dv * shift_cols(u, tp, tau).transpose();
    du += shift_cols(p.tap(j).transpose() * dv, tp, -tau);
  }
  return du;
}

struct BlockCache {
  Matrix x;
  LayerNormCache ln1;
  Matrix ln1_out;
  Matrix q, k, v;
  std::vector<Matrix> attn;  // per (sample, head), column-stochastic [tp x tp]
  Matrix xt;
  LayerNormCache ln2;
  Matrix ln2_out;
  Matrix f1, g;
};

Matrix block_forward(const DenoiserParams& p, std::size_t l, const Matrix& x, std::size_t tp,
                     BlockCache& cache, std::size_t& score_count) {
  const auto& cfg = p.config();
  const bool printed = cfg.block_variant == BlockVariant::AsPrinted;
  const auto dh = static_cast<Eigen::Index>(cfg.head_dim());
  const auto ntp = static_cast<Eigen::Index>(tp);
  const auto batch = x.cols() / ntp;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  cache.x = x;
  cache.ln1_out = layer_norm(x, p.matrix(block_name(l, "ln1.gamma")).col(0),
                             p.matrix(block_name(l, "ln1.beta")).col(0), cache.ln1);
  const Matrix& a_in = printed ? x : cache.ln1_out;
  const Matrix& skip1 = printed ? cache.ln1_out : x;

  cache.q.noalias() = p.matrix(block_name(l, "wq")) * a_in;
  cache.k.noalias() = p.matrix(block_name(l, "wk")) * a_in;
  cache.v.noalias() = p.matrix(block_name(l, "wv")) * a_in;

  Matrix mha(x.rows(), x.cols());
  cache.attn.assign(static_cast<std::size_t>(batch) * cfg.heads, Matrix());
  for (Eigen::Index b = 0; b < batch; ++b) {
    for (Eigen::Index h = 0; h < static_cast<Eigen::Index>(cfg.heads); ++h) {
      const auto q = cache.q.block(h * dh, b * ntp, dh, ntp);
      const auto k = cache.k.block(h * dh, b * ntp, dh, ntp);
      const auto v = cache.v.block(h * dh, b * ntp, dh, ntp);
      // rows index keys, columns index queries; softmax down each column
      Matrix a = (k.transpose() * q) * scale;
      score_count += static_cast<std::size_t>(a.size());
      for (Eigen::Index n = 0; n < ntp; ++n) {
        const double mx = a.col(n).maxCoeff();
        a.col(n) = (a.col(n).array() - mx).exp();
        a.col(n) /= a.col(n).sum();
      }
      mha.block(h * dh, b * ntp, dh, ntp).noalias() = v * a;
      cache.attn[static_cast<std::size_t>(b) * cfg.heads + static_cast<std::size_t>(h)] = std::move(a);
    }
  }

  cache.xt = skip1 + mha;
  cache.ln2_out = layer_norm(cache.xt, p.matrix(block_name(l, "ln2.gamma")).col(0),
                             p.matrix(block_name(l, "ln2.beta")).col(0), cache.ln2);
  const Matrix& f_in = printed ? cache.xt : cache.ln2_out;
  const Matrix& skip2 = printed ? cache.ln2_out : cache.xt;

  cache.f1 = (p.matrix(block_name(l, "ffn.w1")) * f_in).colwise() +
             p.matrix(block_name(l, "ffn.b1")).col(0);
  cache.g = silu(cache.f1);
  Matrix out = (p.matrix(block_name(l, "ffn.w2")) * cache.g).colwise() +
               p.matrix(block_name(l, "ffn.b2")).col(0);
  out += skip2;
  return out;
}

Matrix block_backward(const DenoiserParams& p, std::size_t l, const BlockCache& cache,
                      std::size_t tp, const Matrix& d_out, Vector& grad) {
  const auto& cfg = p.config();
  const auto& layout = p.layout();
  const bool printed = cfg.block_variant == BlockVariant::AsPrinted;
  const auto dh = static_cast<Eigen::Index>(cfg.head_dim());
  const auto ntp = static_cast<Eigen::Index>(tp);
  const auto batch = cache.x.cols() / ntp;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  // FFN
  const Matrix& f_in = printed ? cache.xt : cache.ln2_out;
  tensor_view(grad, layout, block_name(l, "ffn.w2")) += d_out * cache.g.transpose();
  tensor_view(grad, layout, block_name(l, "ffn.b2")).col(0) += d_out.rowwise().sum();
  const Matrix df1 =
      (p.matrix(block_name(l, "ffn.w2")).transpose() * d_out).cwiseProduct(silu_grad(cache.f1));
  tensor_view(grad, layout, block_name(l, "ffn.w1")) += df1 * f_in.transpose();
  tensor_view(grad, layout, block_name(l, "ffn.b1")).col(0) += df1.rowwise().sum();
  const Matrix d_fin = p.matrix(block_name(l, "ffn.w1")).transpose() * df1;

  Matrix dxt = printed ? d_fin : d_out;
  const Matrix& d_ln2 = printed ? d_out : d_fin;
  dxt += layer_norm_backward(d_ln2, p.matrix(block_name(l, "ln2.gamma")).col(0), cache.ln2,
                             tensor_view(grad, layout, block_name(l, "ln2.gamma")),
                             tensor_view(grad, layout, block_name(l, "ln2.beta")));

  // attention
  const Matrix& d_mha = dxt;
  Matrix dq(cache.q.rows(), cache.q.cols());
  Matrix dk(cache.k.rows(), cache.k.cols());
  Matrix dv(cache.v.rows(), cache.v.cols());
  for (Eigen::Index b = 0; b < batch; ++b) {
    for (Eigen::Index h = 0; h < static_cast<Eigen::Index>(cfg.heads); ++h) {
      const Matrix& a = cache.attn[static_cast<std::size_t>(b) * cfg.heads + static_cast<std::size_t>(h)];
      const auto q = cache.q.block(h * dh, b * ntp, dh, ntp);
      const auto k = cache.k.block(h * dh, b * ntp, dh, ntp);
      const auto v = cache.v.block(h * dh, b * ntp, dh, ntp);
      const auto d_o = d_mha.block(h * dh, b * ntp, dh, ntp);
      dv.block(h * dh, b * ntp, dh, ntp).noalias() = d_o * a.transpose();
      const Matrix da = v.transpose() * d_o;
      const Eigen::RowVectorXd dot = (a.array() * da.array()).colwise().sum();
      const Matrix dz = (a.array() * (da.rowwise() - dot).array()) * scale;
      dq.block(h * dh, b * ntp, dh, ntp).noalias() = k * dz;
      dk.block(h * dh, b * ntp, dh, ntp).noalias() = q * dz.transpose();
    }
  }

  const Matrix& a_in = printed ? cache.x : cache.ln1_out;
  tensor_view(grad, layout, block_name(l, "wq")) += dq * a_in.transpose();
  tensor_view(grad, layout, block_name(l, "wk")) += dk * a_in.transpose();
  tensor_view(grad, layout, block_name(l, "wv")) += dv * a_in.transpose();
  Matrix d_ain = p.matrix(block_name(l, "wq")).transpose() * dq;
  d_ain.noalias() += p.matrix(block_name(l, "wk")).transpose() * dk;
  d_ain.noalias() += p.matrix(block_name(l, "wv")).transpose() * dv;

  Matrix dx = printed ? d_ain : dxt;
  const Matrix& d_ln1 = printed ? dxt : d_ain;
  dx += layer_norm_backward(d_ln1, p.matrix(block_name(l, "ln1.gamma")).col(0), cache.ln1,
                            tensor_view(grad, layout, block_name(l, "ln1.gamma")),
                            tensor_view(grad, layout, block_name(l, "ln1.beta")));
  return dx;
}

/// Applies (1 + scale[:, g(col)]) * x + shift[:, g(col)] where g maps a column
/// to its encoding group.
template <typename GroupOf>
Matrix apply_scale_shift(const Matrix& x, const Matrix& scale, const Matrix& shift, GroupOf group) {
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const Eigen::Index g = group(c);
    out.col(c) = (1.0 + scale.col(g).array()) * x.col(c).array() + shift.col(g).array();
  }
  return out;
}

void check_params(const DenoiserConfig& cfg, const DenoiserParams& params) {
  if (!(params.config() == cfg)) throw ShapeError("parameters were built for a different config");
}

}  // namespace

Matrix step_embed_apply(const Matrix& x, std::size_t pos, const DenoiserParams& params,
                        Encoding which) {
  const auto& cfg = params.config();
  const bool diffusion = which == Encoding::DiffusionStep;
  const auto rows = static_cast<Eigen::Index>(diffusion ? cfg.folded_channels() : cfg.d_model);
  if (x.rows() != rows) throw ShapeError("step_embed_apply: channel count mismatch");
  MlpCache cache;
  Matrix scale, shift;
  if (diffusion) {
    const std::size_t positions[] = {pos};
    embed_mlp(params, "step_embed", encodings(positions, cfg.d_model), cache, scale, shift);
    return apply_scale_shift(x, scale, shift, [](Eigen::Index) { return Eigen::Index{0}; });
  }
  const auto positions = iota_positions(pos, static_cast<std::size_t>(x.cols()));
  embed_mlp(params, "time_embed", encodings(positions, cfg.d_model), cache, scale, shift);
  return apply_scale_shift(x, scale, shift, [](Eigen::Index c) { return c; });
}

Matrix initial_conv(const Matrix& x, const DenoiserParams& params) {
  if (x.rows() != static_cast<Eigen::Index>(params.config().folded_channels())) {
    throw ShapeError("initial_conv: channel count mismatch");
  }
  return conv_forward(params, x, static_cast<std::size_t>(x.cols()));
}

Matrix transformer_block(const Matrix& x, const DenoiserParams& params, std::size_t l) {
  if (l >= params.config().layers) throw std::out_of_range("transformer_block: no such layer");
  if (x.rows() != static_cast<Eigen::Index>(params.config().d_model)) {
    throw ShapeError("transformer_block: width mismatch");
  }
  BlockCache cache;
  std::size_t count = 0;
  return block_forward(params, l, x, static_cast<std::size_t>(x.cols()), cache, count);
}

// --- whole network ------------------------------------------------------------

struct ForwardTrace::Impl {
  std::size_t batch = 0;
  Matrix x_fold;
  MlpCache step_mlp;
  Matrix step_scale, step_shift;
  Matrix u;
  Matrix v;
  MlpCache time_mlp;
  Matrix time_scale, time_shift;
  std::vector<BlockCache> blocks;
  Matrix x0, xl;
};

ForwardTrace::ForwardTrace() = default;
ForwardTrace::~ForwardTrace() = default;
ForwardTrace::ForwardTrace(ForwardTrace&&) noexcept = default;
ForwardTrace& ForwardTrace::operator=(ForwardTrace&&) noexcept = default;

Denoiser::Denoiser(DenoiserConfig cfg) : cfg_(cfg) { cfg_.validate(); }

std::size_t Denoiser::attention_score_elements() const {
  const std::size_t tp = cfg_.folded_len();
  return cfg_.layers * cfg_.heads * tp * tp;
}

namespace {

/// Batch rows ([d_in x T] flattened) -> folded columns [d_in*r x B*T'].
Matrix fold_batch(const RowMatrix& xs, const DenoiserConfig& cfg) {
  const std::size_t r = cfg.fold, tp = cfg.folded_len(), t = cfg.seq_len;
  Matrix out(static_cast<Eigen::Index>(cfg.folded_channels()), xs.rows() * static_cast<Eigen::Index>(tp));
  for (Eigen::Index b = 0; b < xs.rows(); ++b)
    for (std::size_t c = 0; c < cfg.in_channels; ++c)
      for (std::size_t tau = 0; tau < tp; ++tau)
        for (std::size_t j = 0; j < r; ++j)
          out(static_cast<Eigen::Index>(c * r + j), b * static_cast<Eigen::Index>(tp) + static_cast<Eigen::Index>(tau)) =
              xs(b, static_cast<Eigen::Index>(c * t + tau * r + j));
  return out;
}

RowMatrix unfold_batch(const Matrix& y, std::size_t batch, const DenoiserConfig& cfg) {
  const std::size_t r = cfg.fold, tp = cfg.folded_len(), t = cfg.seq_len;
  RowMatrix out(static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(cfg.in_channels * t));
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < cfg.in_channels; ++c)
      for (std::size_t tau = 0; tau < tp; ++tau)
        for (std::size_t j = 0; j < r; ++j)
          out(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(c * t + tau * r + j)) =
              y(static_cast<Eigen::Index>(c * r + j), static_cast<Eigen::Index>(b * tp + tau));
  return out;
}

}  // namespace

RowMatrix Denoiser::forward(const DenoiserParams& params, const RowMatrix& xs,
                            std::span<const std::size_t> steps) const {
  ForwardTrace trace;
  return forward(params, xs, steps, trace);
}

RowMatrix Denoiser::forward(const DenoiserParams& params, const RowMatrix& xs,
                            std::span<const std::size_t> steps, ForwardTrace& trace) const {
  check_params(cfg_, params);
  if (xs.cols() != static_cast<Eigen::Index>(cfg_.in_channels * cfg_.seq_len)) {
    throw ShapeError("denoiser input has " + std::to_string(xs.cols()) + " values per row, expected " +
                     std::to_string(cfg_.in_channels * cfg_.seq_len));
  }
  if (steps.size() != static_cast<std::size_t>(xs.rows())) {
    throw ShapeError("denoiser: one diffusion step per row required");
  }

  const std::size_t tp = cfg_.folded_len();
  const auto ntp = static_cast<Eigen::Index>(tp);
  trace.impl = std::make_unique<ForwardTrace::Impl>();
  trace.score_elements = 0;
  auto& tr = *trace.impl;
  tr.batch = static_cast<std::size_t>(xs.rows());

  tr.x_fold = fold_batch(xs, cfg_);

  embed_mlp(params, "step_embed", encodings(steps, cfg_.d_model), tr.step_mlp, tr.step_scale,
            tr.step_shift);
  tr.u = apply_scale_shift(tr.x_fold, tr.step_scale, tr.step_shift,
                           [ntp](Eigen::Index c) { return c / ntp; });

  tr.v = conv_forward(params, tr.u, tp);

  embed_mlp(params, "time_embed", encodings(iota_positions(0, tp), cfg_.d_model), tr.time_mlp,
            tr.time_scale, tr.time_shift);
  tr.x0 = apply_scale_shift(tr.v, tr.time_scale, tr.time_shift,
                            [ntp](Eigen::Index c) { return c % ntp; });

  tr.blocks.resize(cfg_.layers);
  Matrix h = tr.x0;
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    h = block_forward(params, l, h, tp, tr.blocks[l], trace.score_elements);
  }
  tr.xl = std::move(h);

  const auto w_out = params.matrix("out.weight");
  const auto dm = static_cast<Eigen::Index>(cfg_.d_model);
  Matrix y = w_out.leftCols(dm) * tr.x0;
  y.noalias() += w_out.rightCols(dm) * tr.xl;
  y.colwise() += params.matrix("out.bias").col(0);
  return unfold_batch(y, tr.batch, cfg_);
}

void Denoiser::backward(const DenoiserParams& params, const ForwardTrace& trace,
                        const RowMatrix& d_out, Vector& grad) const {
  check_params(cfg_, params);
  if (!trace.impl) throw std::logic_error("Denoiser::backward: empty trace");
  const auto& tr = *trace.impl;
  const auto& layout = params.layout();
  if (grad.size() != static_cast<Eigen::Index>(layout.total_size())) {
    grad = Vector::Zero(static_cast<Eigen::Index>(layout.total_size()));
  }
  const std::size_t tp = cfg_.folded_len();
  const auto ntp = static_cast<Eigen::Index>(tp);
  const auto dm = static_cast<Eigen::Index>(cfg_.d_model);

  const Matrix dy = fold_batch(d_out, cfg_);
  const auto w_out = params.matrix("out.weight");
  auto gw_out = tensor_view(grad, layout, "out.weight");
  gw_out.leftCols(dm) += dy * tr.x0.transpose();
  gw_out.rightCols(dm) += dy * tr.xl.transpose();
  tensor_view(grad, layout, "out.bias").col(0) += dy.rowwise().sum();

  Matrix dh = w_out.rightCols(dm).transpose() * dy;
  for (std::size_t l = cfg_.layers; l-- > 0;) {
    dh = block_backward(params, l, tr.blocks[l], tp, dh, grad);
  }
  Matrix dx0 = dh;
  dx0.noalias() += w_out.leftCols(dm).transpose() * dy;

  // time-step scale/shift, shared by every sample at folded position t
  Matrix d_tscale = Matrix::Zero(tr.time_scale.rows(), tr.time_scale.cols());
  Matrix d_tshift = Matrix::Zero(tr.time_shift.rows(), tr.time_shift.cols());
  Matrix dv(dx0.rows(), dx0.cols());
  for (Eigen::Index c = 0; c < dx0.cols(); ++c) {
    const Eigen::Index t = c % ntp;
    dv.col(c) = dx0.col(c).array() * (1.0 + tr.time_scale.col(t).array());
    d_tscale.col(t).array() += dx0.col(c).array() * tr.v.col(c).array();
    d_tshift.col(t) += dx0.col(c);
  }
  embed_mlp_backward(params, "time_embed", tr.time_mlp, d_tscale, d_tshift, grad);

  const Matrix du = conv_backward(params, tr.u, tp, dv, grad);

  // diffusion-step scale/shift, one per sample
  Matrix d_sscale = Matrix::Zero(tr.step_scale.rows(), tr.step_scale.cols());
  Matrix d_sshift = Matrix::Zero(tr.step_shift.rows(), tr.step_shift.cols());
  for (Eigen::Index c = 0; c < du.cols(); ++c) {
    const Eigen::Index b = c / ntp;
    d_sscale.col(b).array() += du.col(c).array() * tr.x_fold.col(c).array();
    d_sshift.col(b) += du.col(c);
  }
  embed_mlp_backward(params, "step_embed", tr.step_mlp, d_sscale, d_sshift, grad);
}

// --- loss ---------------------------------------------------------------------

LossResult loss_with(const Denoiser& net, const DenoiserParams& params, const RowMatrix& batch,
                     std::span<const std::size_t> steps, const RowMatrix& noise,
                     const NoiseSchedule& ns, PosteriorVariance variance) {
  const auto b = batch.rows();
  if (b < 1) throw std::invalid_argument("loss: empty batch");
  if (noise.rows() != b || noise.cols() != batch.cols()) throw ShapeError("loss: noise shape mismatch");
  if (steps.size() != static_cast<std::size_t>(b)) throw ShapeError("loss: one step per row required");

  RowMatrix xs(b, batch.cols());
  RowMatrix target(b, batch.cols());
  for (Eigen::Index i = 0; i < b; ++i) {
    const Vector x0 = batch.row(i).transpose();
    const Vector xsi = forward_sample(x0, steps[static_cast<std::size_t>(i)], noise.row(i).transpose(), ns);
    target.row(i) = posterior_mean(xsi, x0, steps[static_cast<std::size_t>(i)], ns).transpose();
    xs.row(i) = xsi.transpose();
  }

  ForwardTrace trace;
  const RowMatrix pred = net.forward(params, xs, steps, trace);
  const RowMatrix diff = pred - target;

  LossResult result;
  result.steps.assign(steps.begin(), steps.end());
  RowMatrix d_out(b, batch.cols());
  const double inv_b = 1.0 / static_cast<double>(b);
  for (Eigen::Index i = 0; i < b; ++i) {
    const std::size_t s = steps[static_cast<std::size_t>(i)];
    const double w = 1.0 / (2.0 * ns.variance(s, variance));
    const double term = w * diff.row(i).squaredNorm() * inv_b;
    if (!std::isfinite(term)) {
      throw NumericError("non-finite loss at diffusion step " + std::to_string(s),
                         static_cast<long long>(s));
    }
    result.loss += term;
    d_out.row(i) = (2.0 * w * inv_b) * diff.row(i);
  }
  result.grad = Vector::Zero(static_cast<Eigen::Index>(params.layout().total_size()));
  net.backward(params, trace, d_out, result.grad);
  return result;
}

LossResult loss_simple(const Denoiser& net, const DenoiserParams& params, const RowMatrix& batch,
                       const NoiseSchedule& ns, Rng& rng, PosteriorVariance variance) {
  std::vector<std::size_t> steps(static_cast<std::size_t>(batch.rows()));
  for (auto& s : steps) s = 1 + static_cast<std::size_t>(rng.below(ns.steps()));
  RowMatrix noise(batch.rows(), batch.cols());
  for (Eigen::Index i = 0; i < noise.rows(); ++i)
    for (Eigen::Index j = 0; j < noise.cols(); ++j) noise(i, j) = rng.normal();
  return loss_with(net, params, batch, steps, noise, ns, variance);
}

}  // namespace tsdiff
