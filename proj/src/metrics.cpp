#include "tsdiff/metrics.hpp"

#include "tsdiff/container.hpp"
#include "tsdiff/rng.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

namespace tsdiff {

GaussianSummary gaussian_summary(const RowMatrix& x) {
  if (x.rows() < 2) throw std::invalid_argument("gaussian summary needs at least 2 rows");
  GaussianSummary g;
  g.mean = x.colwise().mean().transpose();
  const Matrix centered = x.rowwise() - g.mean.transpose();
  g.covariance = centered.transpose() * centered / static_cast<double>(x.rows() - 1);
  return g;
}

namespace {

Eigen::SelfAdjointEigenSolver<Matrix> checked_eigen(const Matrix& a, const char* what) {
  const Matrix sym = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
  if (es.info() != Eigen::Success) throw NumericError(std::string(what) + ": eigendecomposition failed");
  const double tol = 1e-8 * std::abs(sym.trace());
  if (es.eigenvalues().size() > 0 && es.eigenvalues().minCoeff() < -tol)
    throw NumericError(std::string(what) + ": matrix is not positive semi-definite");
  return es;
}

}  // namespace

Matrix psd_sqrt(const Matrix& a) {
  const auto es = checked_eigen(a, "psd_sqrt");
  const Vector root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

double gfd(const GaussianSummary& a, const GaussianSummary& b) {
  if (a.mean.size() != b.mean.size() || a.covariance.rows() != b.covariance.rows())
    throw ShapeError("gfd: dimension mismatch");
  checked_eigen(b.covariance, "gfd");
  const Matrix s1h = psd_sqrt(a.covariance);
  const Matrix m = s1h * b.covariance * s1h;
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  const double tr_sqrt = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double value =
      (a.mean - b.mean).squaredNorm() + a.covariance.trace() + b.covariance.trace() - 2.0 * tr_sqrt;
  return std::max(0.0, value);
}

namespace {

Matrix pooled_sq_distances(const RowMatrix& z) {
  const auto n = z.rows();
  Matrix d(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    d(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) d(i, j) = d(j, i) = (z.row(i) - z.row(j)).squaredNorm();
  }
  return d;
}

double median_from_sq(const Matrix& d) {
  std::vector<double> v;
  const auto n = d.rows();
  v.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) v.push_back(d(i, j));
  if (v.empty()) return 0.0;
  const auto mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double med = std::sqrt(v[mid]);
  if (v.size() % 2 == 0) {
    const double below = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    med = 0.5 * (med + std::sqrt(below));
  }
  return med;
}

RowMatrix stack(const RowMatrix& a, const RowMatrix& b) {
  if (a.cols() != b.cols()) throw ShapeError("metric inputs differ in T");
  RowMatrix z(a.rows() + b.rows(), a.cols());
  z << a, b;
  return z;
}

std::vector<double> column(const RowMatrix& m, Eigen::Index t) {
  std::vector<double> c(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) c[static_cast<std::size_t>(i)] = m(i, t);
  return c;
}

void require_nonempty(const RowMatrix& a, const RowMatrix& b) {
  if (a.rows() == 0 || b.rows() == 0) throw std::invalid_argument("metric inputs must be nonempty");
  if (a.cols() != b.cols()) throw ShapeError("metric inputs differ in T");
}

}  // namespace

double median_pairwise_distance(const RowMatrix& a, const RowMatrix& b) {
  return median_from_sq(pooled_sq_distances(stack(a, b)));
}

double mmd(const RowMatrix& a, const RowMatrix& b, std::optional<double> bandwidth) {
  require_nonempty(a, b);
  const Matrix d = pooled_sq_distances(stack(a, b));
  const double h = bandwidth ? *bandwidth : median_from_sq(d);
  if (!(h > 0.0)) throw NumericError("mmd: bandwidth is zero (all points identical)");
  const double g = 1.0 / (2.0 * h * h);
  const auto na = a.rows(), nb = b.rows();
  double kaa = 0, kbb = 0, kab = 0;
  for (Eigen::Index i = 0; i < na + nb; ++i)
    for (Eigen::Index j = 0; j < na + nb; ++j) {
      const double k = std::exp(-g * d(i, j));
      if (i < na && j < na) kaa += k;
      else if (i >= na && j >= na) kbb += k;
      else if (i < na) kab += k;
    }
  const auto fa = static_cast<double>(na), fb = static_cast<double>(nb);
  return std::max(0.0, kaa / (fa * fa) + kbb / (fb * fb) - 2.0 * kab / (fa * fb));
}

double wasserstein_1d(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("wasserstein: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  if (a.size() == b.size()) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
    return s / static_cast<double>(a.size());
  }
  std::vector<double> grid(a);
  grid.insert(grid.end(), b.begin(), b.end());
  std::sort(grid.begin(), grid.end());
  const auto na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  double s = 0;
  std::size_t ia = 0, ib = 0;
  for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
    while (ia < a.size() && a[ia] <= grid[k]) ++ia;
    while (ib < b.size() && b[ib] <= grid[k]) ++ib;
    s += std::abs(static_cast<double>(ia) / na - static_cast<double>(ib) / nb) * (grid[k + 1] - grid[k]);
  }
  return s;
}

double ks_1d(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("ks: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const auto na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  double best = 0;
  std::size_t ia = 0, ib = 0;
  while (ia < a.size() || ib < b.size()) {
    double v;
    if (ib == b.size() || (ia < a.size() && a[ia] <= b[ib])) v = a[ia];
    else v = b[ib];
    while (ia < a.size() && a[ia] <= v) ++ia;
    while (ib < b.size() && b[ib] <= v) ++ib;
    best = std::max(best, std::abs(static_cast<double>(ia) / na - static_cast<double>(ib) / nb));
  }
  return best;
}

Histogram shared_histogram(const std::vector<double>& a, const std::vector<double>& b, std::size_t bins) {
  if (bins < 2) throw std::invalid_argument("histogram needs at least 2 bins");
  if (a.empty() || b.empty()) throw std::invalid_argument("histogram: empty sample");
  const auto [amin, amax] = std::minmax_element(a.begin(), a.end());
  const auto [bmin, bmax] = std::minmax_element(b.begin(), b.end());
  const double lo = std::min(*amin, *bmin), hi = std::max(*amax, *bmax);
  Histogram h;
  h.edges.resize(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i)
    h.edges[i] = i == bins ? hi : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins);
  h.counts_a.assign(bins, 0);
  h.counts_b.assign(bins, 0);
  auto bin_of = [&](double v) -> std::size_t {
    if (!(hi > lo)) return 0;
    const auto k = static_cast<std::size_t>(std::floor((v - lo) / (hi - lo) * static_cast<double>(bins)));
    return std::min(k, bins - 1);
  };
  for (double v : a) ++h.counts_a[bin_of(v)];
  for (double v : b) ++h.counts_b[bin_of(v)];
  return h;
}

double kl_1d(const std::vector<double>& a, const std::vector<double>& b, std::size_t bins, double eps) {
  const auto h = shared_histogram(a, b, bins);
  if (!(h.edges.back() > h.edges.front())) return 0.0;
  std::vector<double> p(bins), q(bins);
  for (std::size_t i = 0; i < bins; ++i) {
    p[i] = static_cast<double>(h.counts_a[i]) / static_cast<double>(a.size()) + eps;
    q[i] = static_cast<double>(h.counts_b[i]) / static_cast<double>(b.size()) + eps;
  }
  const double sp = std::accumulate(p.begin(), p.end(), 0.0), sq = std::accumulate(q.begin(), q.end(), 0.0);
  double kl = 0;
  for (std::size_t i = 0; i < bins; ++i) {
    const double pi = p[i] / sp, qi = q[i] / sq;
    kl += pi * std::log(pi / qi);
  }
  return std::max(0.0, kl);
}

Vector wd_columns(const RowMatrix& a, const RowMatrix& b) {
  require_nonempty(a, b);
  Vector out(a.cols());
  for (Eigen::Index t = 0; t < a.cols(); ++t) out[t] = wasserstein_1d(column(a, t), column(b, t));
  return out;
}

Vector ks_columns(const RowMatrix& a, const RowMatrix& b) {
  require_nonempty(a, b);
  Vector out(a.cols());
  for (Eigen::Index t = 0; t < a.cols(); ++t) out[t] = ks_1d(column(a, t), column(b, t));
  return out;
}

Vector kl_columns(const RowMatrix& a, const RowMatrix& b, std::size_t bins, double eps) {
  require_nonempty(a, b);
  Vector out(a.cols());
  for (Eigen::Index t = 0; t < a.cols(); ++t) out[t] = kl_1d(column(a, t), column(b, t), bins, eps);
  return out;
}

double wd_marginal(const RowMatrix& a, const RowMatrix& b) { return wd_columns(a, b).mean(); }
double ks_marginal(const RowMatrix& a, const RowMatrix& b) { return ks_columns(a, b).mean(); }
double kl_marginal(const RowMatrix& a, const RowMatrix& b, std::size_t bins, double eps) {
  return kl_columns(a, b, bins, eps).mean();
}

MetricValues all_metrics(const RowMatrix& a, const RowMatrix& b, const MetricConfig& cfg) {
  MetricValues v;
  v.mmd = mmd(a, b, cfg.mmd_bandwidth);
  v.gfd = gfd(gaussian_summary(a), gaussian_summary(b));
  v.kl = kl_marginal(a, b, cfg.kl_bins, cfg.kl_eps);
  v.wd = wd_marginal(a, b);
  v.ks = ks_marginal(a, b);
  return v;
}

namespace {

RowMatrix draw_rows(const RowMatrix& m, std::size_t k, Rng& rng) {
  std::vector<std::size_t> idx(static_cast<std::size_t>(m.rows()));
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.below(idx.size() - i)]);
  RowMatrix out(static_cast<Eigen::Index>(k), m.cols());
  for (std::size_t i = 0; i < k; ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(idx[i]));
  return out;
}

constexpr double MetricValues::*kFields[] = {&MetricValues::mmd, &MetricValues::gfd, &MetricValues::kl,
                                             &MetricValues::wd, &MetricValues::ks};
constexpr const char* kNames[] = {"mmd", "gfd", "kl", "wd", "ks"};

}  // namespace

MetricReport bootstrap_eval(const RowMatrix& a, const RowMatrix& b, const MetricConfig& cfg) {
  require_nonempty(a, b);
  if (cfg.repeats < 1) throw std::invalid_argument("bootstrap needs at least one repeat");
  const auto max_subset = static_cast<std::size_t>(std::min(a.rows(), b.rows()));
  const std::size_t k = cfg.subset_size.value_or(std::min<std::size_t>(max_subset, 1000));
  if (k > max_subset)
    throw std::invalid_argument("bootstrap subset size " + std::to_string(k) + " exceeds the smaller set (" +
                                std::to_string(max_subset) + " rows)");
  if (k < 2) throw std::invalid_argument("bootstrap subset size must be at least 2");

  MetricReport rep;
  rep.subset_size = k;
  rep.repeats = cfg.repeats;
  rep.seed = cfg.seed;
  for (std::size_t r = 0; r < cfg.repeats; ++r) {
    Rng rng(cfg.seed, r);
    const RowMatrix sa = draw_rows(a, k, rng);
    const RowMatrix sb = draw_rows(b, k, rng);
    rep.per_repeat.push_back(all_metrics(sa, sb, cfg));
  }
  const auto n = static_cast<double>(cfg.repeats);
  for (auto f : kFields) {
    double s = 0;
    for (const auto& v : rep.per_repeat) s += v.*f;
    rep.mean.*f = s / n;
    double ss = 0;
    for (const auto& v : rep.per_repeat) ss += (v.*f - rep.mean.*f) * (v.*f - rep.mean.*f);
    rep.std.*f = std::sqrt(ss / n);
  }
  return rep;
}

std::string MetricReport::to_text() const {
  std::map<std::string, std::string> kv;
  for (std::size_t i = 0; i < 5; ++i) {
    kv[std::string(kNames[i]) + ".mean"] = format_double(mean.*kFields[i]);
    kv[std::string(kNames[i]) + ".std"] = format_double(std.*kFields[i]);
  }
  kv["repeats"] = std::to_string(repeats);
  kv["subset_size"] = std::to_string(subset_size);
  kv["seed"] = std::to_string(seed);
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

std::string MetricReport::to_csv() const {
  std::string out = "repeat,mmd,gfd,kl,wd,ks\n";
  for (std::size_t r = 0; r < per_repeat.size(); ++r) {
    out += std::to_string(r);
    for (auto f : kFields) out += "," + format_double(per_repeat[r].*f);
    out += "\n";
  }
  return out;
}

}  // namespace tsdiff
