#include "tsdiff/gmm.hpp"

#include "tsdiff/rng.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>
#include <numbers>

namespace tsdiff {

namespace {

struct Factor {
  Eigen::LLT<Matrix> llt;
  double log_det = 0.0;
};

Factor factorize(Matrix& cov, std::size_t& ridge_events) {
  const auto t = static_cast<double>(cov.rows());
  for (int attempt = 0; attempt < 2; ++attempt) {
    Factor f;
    f.llt.compute(cov);
    if (f.llt.info() == Eigen::Success) {
      const Vector diag = f.llt.matrixL().toDenseMatrix().diagonal();
      if ((diag.array() > 0.0).all() && diag.allFinite()) {
        f.log_det = 2.0 * diag.array().log().sum();
        return f;
      }
    }
    if (attempt == 0) {
      const double tr = cov.trace();
      const double ridge = tr > 0.0 ? 1e-6 * tr / t : 1e-6;
      cov.diagonal().array() += ridge;
      ++ridge_events;
    }
  }
  throw NumericError("GMM covariance is singular even after regularisation");
}

/// log w_k + log N(x_i | mu_k, S_k) for every row and component.
Matrix log_joint(const RowMatrix& x, const GmmModel& m, const std::vector<Factor>& f) {
  const auto n = x.rows();
  const auto k = static_cast<Eigen::Index>(m.components());
  const double c = 0.5 * static_cast<double>(x.cols()) * std::log(2.0 * std::numbers::pi);
  Matrix out(n, k);
  for (Eigen::Index j = 0; j < k; ++j) {
    const double lw = m.weights[j] > 0 ? std::log(m.weights[j]) : -std::numeric_limits<double>::infinity();
    Matrix diff = (x.rowwise() - m.means[static_cast<std::size_t>(j)].transpose()).transpose();
    f[static_cast<std::size_t>(j)].llt.matrixL().solveInPlace(diff);
    out.col(j) = (lw - c - 0.5 * f[static_cast<std::size_t>(j)].log_det) -
                 0.5 * diff.colwise().squaredNorm().transpose().array();
  }
  return out;
}

Vector row_logsumexp(const Matrix& a) {
  Vector out(a.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const double mx = a.row(i).maxCoeff();
    out[i] = std::isinf(mx) ? mx : mx + std::log((a.row(i).array() - mx).exp().sum());
  }
  return out;
}

std::vector<Factor> factor_all(GmmModel& m) {
  std::vector<Factor> f;
  for (auto& cov : m.covariances) f.push_back(factorize(cov, m.ridge_events));
  return f;
}

std::vector<Eigen::Index> kmeans_pp(const RowMatrix& x, std::size_t k, Rng& rng) {
  const auto n = static_cast<std::uint64_t>(x.rows());
  std::vector<Eigen::Index> centers{static_cast<Eigen::Index>(rng.below(n))};
  Vector d2 = (x.rowwise() - x.row(centers[0])).rowwise().squaredNorm();
  while (centers.size() < k) {
    const double total = d2.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      const double u = rng.uniform() * total;
      double acc = 0.0;
      pick = x.rows() - 1;
      for (Eigen::Index i = 0; i < x.rows(); ++i) {
        acc += d2[i];
        if (acc > u && d2[i] > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<Eigen::Index>(rng.below(n));
    }
    centers.push_back(pick);
    d2 = d2.cwiseMin((x.rowwise() - x.row(pick)).rowwise().squaredNorm());
  }
  return centers;
}

}  // namespace

GmmModel gmm_fit(const RowMatrix& x, const GmmConfig& cfg) {
  const auto n = static_cast<std::size_t>(x.rows());
  const auto t = x.cols();
  if (cfg.components < 1) throw ConfigError("GMM needs at least one component");
  if (n <= cfg.components)
    throw std::invalid_argument("GMM needs more rows (" + std::to_string(n) + ") than components (" +
                                std::to_string(cfg.components) + ")");
  if (t > 96 && !cfg.allow_large)
    throw ConfigError("GMM with T = " + std::to_string(t) +
                      " stores a T x T covariance per component; enable allow_large to proceed");
  if (!x.allFinite()) throw std::invalid_argument("GMM data must be finite");

  Rng rng(cfg.seed);
  GmmModel m;
  const auto k = cfg.components;
  m.weights = Vector::Constant(static_cast<Eigen::Index>(k), 1.0 / static_cast<double>(k));
  const Vector mu = x.colwise().mean().transpose();
  const Matrix centered = x.rowwise() - mu.transpose();
  const Matrix global = centered.transpose() * centered / static_cast<double>(n);
  for (auto c : kmeans_pp(x, k, rng)) {
    m.means.push_back(x.row(c).transpose());
    m.covariances.push_back(global);
  }

  for (std::size_t it = 0;; ++it) {
    const auto factors = factor_all(m);
    const Matrix lj = log_joint(x, m, factors);
    const Vector ll = row_logsumexp(lj);
    const double mean_ll = ll.mean();
    if (!std::isfinite(mean_ll)) throw NumericError("GMM log-likelihood is not finite", static_cast<long long>(it));
    m.log_likelihood.push_back(mean_ll);
    if (it > 0 && mean_ll - m.log_likelihood[it - 1] < cfg.tol) break;
    if (it == cfg.max_iters) break;

    const Matrix resp = (lj.colwise() - ll).array().exp().matrix();
    for (std::size_t j = 0; j < k; ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      const double nk = resp.col(jj).sum();
      m.weights[jj] = nk / static_cast<double>(n);
      if (nk <= 0.0) continue;  // empty component keeps its last mean/covariance
      m.means[j] = (x.transpose() * resp.col(jj)) / nk;
      const Matrix d = x.rowwise() - m.means[j].transpose();
      const Matrix c = d.transpose() * resp.col(jj).asDiagonal() * d / nk;
      m.covariances[j] = 0.5 * (c + c.transpose());
    }
    m.weights /= m.weights.sum();
  }
  return m;
}

double gmm_mean_log_likelihood(const GmmModel& model, const RowMatrix& data) {
  GmmModel copy = model;
  const auto factors = factor_all(copy);
  return row_logsumexp(log_joint(data, copy, factors)).mean();
}

RowMatrix gmm_sample(const GmmModel& model, std::size_t m, std::uint64_t seed) {
  const auto k = model.components();
  const auto t = static_cast<Eigen::Index>(model.dim());
  std::vector<Matrix> roots;
  for (const auto& cov : model.covariances) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (cov + cov.transpose()));
    roots.push_back(es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal());
  }
  RowMatrix out(static_cast<Eigen::Index>(m), t);
  for (std::size_t i = 0; i < m; ++i) {
    Rng rng(seed, i);
    const double u = rng.uniform();
    std::size_t c = k - 1;
    double acc = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      acc += model.weights[static_cast<Eigen::Index>(j)];
      if (u < acc) {
        c = j;
        break;
      }
    }
    Vector z(t);
    for (Eigen::Index j = 0; j < t; ++j) z[j] = rng.normal();
    out.row(static_cast<Eigen::Index>(i)) = (model.means[c] + roots[c] * z).transpose();
  }
  return out;
}

Container GmmModel::to_container() const {
  Container c;
  c.set("kind", std::string("gmm"));
  c.set("components", std::uint64_t{components()});
  c.set("dim", std::uint64_t{dim()});
  c.set("ridge_events", std::uint64_t{ridge_events});
  c.add_vector("weights", weights);
  for (std::size_t j = 0; j < components(); ++j) {
    c.add_vector("mean/" + std::to_string(j), means[j]);
    c.add_matrix("cov/" + std::to_string(j), RowMatrix(covariances[j]));
  }
  c.add("log_likelihood", {log_likelihood.size()}, log_likelihood);
  return c;
}

GmmModel GmmModel::from_container(const Container& c) {
  if (c.get("kind") != "gmm") throw FormatError("file is a '" + c.get("kind") + "', not a GMM model");
  GmmModel m;
  const auto k = c.get_u64("components");
  const auto t = static_cast<Eigen::Index>(c.get_u64("dim"));
  m.ridge_events = c.get_u64("ridge_events");
  m.weights = c.vector("weights");
  if (static_cast<std::uint64_t>(m.weights.size()) != k) throw FormatError("GMM weight count mismatch");
  for (std::uint64_t j = 0; j < k; ++j) {
    m.means.push_back(c.vector("mean/" + std::to_string(j)));
    m.covariances.push_back(c.matrix("cov/" + std::to_string(j)));
    if (m.means.back().size() != t || m.covariances.back().rows() != t || m.covariances.back().cols() != t)
      throw FormatError("GMM component " + std::to_string(j) + " has the wrong dimension");
  }
  m.log_likelihood = c.tensor("log_likelihood").data;
  return m;
}

void save_gmm(const GmmModel& model, const std::filesystem::path& path) { model.to_container().write(path); }

GmmModel load_gmm(const std::filesystem::path& path) { return GmmModel::from_container(Container::read(path)); }

}  // namespace tsdiff
