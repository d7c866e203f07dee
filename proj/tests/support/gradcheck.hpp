#pragma once

#include "tsdiff/denoiser.hpp"
#include "tsdiff/rng.hpp"
#include "tsdiff/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

namespace gradcheck {

/// Parameter group used for coverage reporting.
inline std::string group_of(const std::string& name) {
  if (name.rfind("conv.", 0) == 0) return "conv";
  if (name.rfind("step_embed.", 0) == 0 || name.rfind("time_embed.", 0) == 0) return "embedding";
  if (name.rfind("out.", 0) == 0) return "projection";
  if (name.find(".ln") != std::string::npos) return "layernorm";
  if (name.find(".ffn.") != std::string::npos) return "ffn";
  return "attention";
}

/// Every entry uniform in [-0.5, 0.5], LayerNorm gains near one.
inline tsdiff::DenoiserParams random_params(const tsdiff::DenoiserConfig& cfg, tsdiff::Rng& rng) {
  tsdiff::DenoiserParams p(cfg);
  for (const auto& t : p.layout().tensors()) {
    const bool gain = t.name.size() > 6 && t.name.compare(t.name.size() - 6, 6, ".gamma") == 0;
    for (std::size_t i = 0; i < t.size; ++i) {
      const double u = rng.uniform() - 0.5;
      p.values()[static_cast<Eigen::Index>(t.offset + i)] = gain ? 1.0 + 0.4 * u : u;
    }
  }
  return p;
}

struct Result {
  std::size_t checked = 0;
  double max_rel_err = 0.0;
  std::string worst;
  std::map<std::string, std::size_t> per_group;
};

/// Central finite differences on `per_tensor` random entries of every tensor
/// (at least `min_total` overall), step h = 1e-5 (1 + |w|).
inline Result run(const tsdiff::DenoiserConfig& cfg, std::uint64_t seed, std::size_t min_total = 200) {
  using namespace tsdiff;
  Rng rng(seed);
  const auto ns = NoiseSchedule::cosine(20);
  const Denoiser net(cfg);
  DenoiserParams params = random_params(cfg, rng);

  const Eigen::Index b = 3, width = static_cast<Eigen::Index>(cfg.in_channels * cfg.seq_len);
  RowMatrix batch(b, width), noise(b, width);
  for (Eigen::Index i = 0; i < b; ++i)
    for (Eigen::Index j = 0; j < width; ++j) {
      batch(i, j) = 2.0 * rng.uniform() - 1.0;
      noise(i, j) = rng.normal();
    }
  const std::vector<std::size_t> steps = {1, 9, 20};

  auto loss_at = [&](const DenoiserParams& p) { return loss_with(net, p, batch, steps, noise, ns).loss; };
  const Vector analytic = loss_with(net, params, batch, steps, noise, ns).grad;

  const auto& tensors = params.layout().tensors();
  // every tensor gets a share; whatever small tensors cannot absorb is spread
  // over the remaining ones
  std::vector<std::size_t> quota(tensors.size(), 0);
  for (std::size_t assigned = 0, round = 0; assigned < min_total && round < 1000; ++round)
    for (std::size_t i = 0; i < tensors.size() && assigned < min_total; ++i)
      if (quota[i] < tensors[i].size) ++quota[i], ++assigned;
  Result res;
  for (std::size_t ti = 0; ti < tensors.size(); ++ti) {
    const auto& t = tensors[ti];
    for (std::size_t n = 0; n < quota[ti]; ++n) {
      const auto idx = static_cast<Eigen::Index>(t.offset + rng.below(t.size));
      const double w = params.values()[idx];
      const double h = 1e-5 * (1.0 + std::abs(w));
      params.values()[idx] = w + h;
      const double up = loss_at(params);
      params.values()[idx] = w - h;
      const double down = loss_at(params);
      params.values()[idx] = w;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[idx];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      if (rel > res.max_rel_err) {
        res.max_rel_err = rel;
        res.worst = t.name + " analytic=" + std::to_string(a) + " numeric=" + std::to_string(numeric);
      }
      ++res.checked;
      ++res.per_group[group_of(t.name)];
    }
  }
  return res;
}

}  // namespace gradcheck
