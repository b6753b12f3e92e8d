#pragma once

// Expectation-maximization for a full-covariance GMM with k-means++ seeding.

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "gmmcs/core_models.hpp"
#include "gmmcs/random.hpp"

namespace gmmcs {

struct EmOptions {
  int max_iters = 500;
  double tol = 1e-6;  // stop when the mean log-likelihood gains less than this
};

struct EmResult {
  GmmModel model;
  std::vector<double> log_likelihood;  // mean per sample, one entry per E-step
  int iterations = 0;                   // M-steps after initialization
  bool converged = false;
};

namespace detail {

struct EmParams {
  VectorXd weights;
  std::vector<VectorXd> means;
  std::vector<MatrixXd> covs;
};

/// D^2 seeding; returns K row indices of x.
inline std::vector<Index> kmeanspp_centers(const MatrixXd& x, Index k, Rng& rng) {
  const Index n = x.rows();
  std::vector<Index> centers;
  centers.push_back(std::uniform_int_distribution<Index>(0, n - 1)(rng));
  VectorXd d2 = (x.rowwise() - x.row(centers[0])).rowwise().squaredNorm();
  while (static_cast<Index>(centers.size()) < k) {
    Index next;
    if (d2.sum() > 0.0) {
      std::discrete_distribution<Index> pick(d2.data(), d2.data() + n);
      next = pick(rng);
    } else {
      next = std::uniform_int_distribution<Index>(0, n - 1)(rng);
    }
    centers.push_back(next);
    d2 = d2.cwiseMin((x.rowwise() - x.row(next)).rowwise().squaredNorm());
  }
  return centers;
}

/// Means and covariances from responsibilities r (n x K). Components with
/// no mass keep their previous parameters.
inline void em_m_step(const MatrixXd& x, const MatrixXd& r, double reg, EmParams& p) {
  const Index n = x.rows(), m = x.cols(), k = r.cols();
  p.weights.resize(k);
  for (Index j = 0; j < k; ++j) {
    const double nk = r.col(j).sum();
    p.weights(j) = nk / static_cast<double>(n);
    if (!(nk > 1e-10)) continue;
    p.means[static_cast<std::size_t>(j)] = x.transpose() * r.col(j) / nk;
    const MatrixXd w =
        ((x.rowwise() - p.means[static_cast<std::size_t>(j)].transpose()).array().colwise() * r.col(j).array().sqrt())
            .matrix();
    MatrixXd cov = MatrixXd::Zero(m, m);
    cov.selfadjointView<Eigen::Lower>().rankUpdate(w.transpose());
    cov = cov.selfadjointView<Eigen::Lower>();
    cov /= nk;
    cov.diagonal().array() += reg;
    p.covs[static_cast<std::size_t>(j)] = cov;
  }
}

/// Fills r with responsibilities and returns the mean log-likelihood.
inline double em_e_step(const MatrixXd& x, const EmParams& p, MatrixXd& r) {
  const Index n = x.rows(), m = x.cols(), k = p.weights.size();
  MatrixXd logp(n, k);
  for (Index j = 0; j < k; ++j) {
    const auto& cov = p.covs[static_cast<std::size_t>(j)];
    Eigen::LLT<MatrixXd> llt(cov);
    require(llt.info() == Eigen::Success, ErrorKind::SingularCovariance, "EM covariance lost positive definiteness");
    const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    const MatrixXd z =
        llt.matrixL().solve((x.rowwise() - p.means[static_cast<std::size_t>(j)].transpose()).transpose());
    const double lw = p.weights(j) > 0.0 ? std::log(p.weights(j)) : -std::numeric_limits<double>::infinity();
    logp.col(j) = (lw - 0.5 * (static_cast<double>(m) * kLog2Pi + log_det)) - 0.5 * z.colwise().squaredNorm().transpose().array();
  }
  r.resize(n, k);
  double total = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double lse = log_sum_exp(logp.row(i).transpose());
    total += lse;
    r.row(i) = (logp.row(i).array() - lse).exp();
  }
  return total / static_cast<double>(n);
}

}  // namespace detail

/// Fits K components to the rows of `x`. Each M-step covariance gets +reg I.
inline EmResult train_gmm_em(const MatrixXd& x, Index k, std::uint64_t seed, double reg, const EmOptions& opts = {}) {
  require(k >= 1, ErrorKind::InvalidInput, "need at least one component");
  require(reg > 0.0, ErrorKind::InvalidInput, "covariance regularization must be positive");
  require(x.rows() >= 10 * k, ErrorKind::InsufficientData,
          "EM needs at least 10 samples per component (" + std::to_string(x.rows()) + " < " + std::to_string(10 * k) + ")");
  require(x.allFinite(), ErrorKind::InvalidInput, "training data has non-finite entries");
  const Index n = x.rows();

  Rng rng(seed);
  const auto centers = detail::kmeanspp_centers(x, k, rng);
  MatrixXd r = MatrixXd::Zero(n, k);
  for (Index i = 0; i < n; ++i) {
    Index best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Index j = 0; j < k; ++j) {
      const double d = (x.row(i) - x.row(centers[static_cast<std::size_t>(j)])).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = j;
      }
    }
    r(i, best) = 1.0;
  }
  detail::EmParams p;
  const VectorXd global_mean = x.colwise().mean().transpose();
  const MatrixXd centered = x.rowwise() - global_mean.transpose();
  MatrixXd global_cov = centered.transpose() * centered / static_cast<double>(n);
  global_cov.diagonal().array() += reg;
  for (Index j = 0; j < k; ++j) {
    p.means.push_back(x.row(centers[static_cast<std::size_t>(j)]).transpose());
    p.covs.push_back(global_cov);
  }
  detail::em_m_step(x, r, reg, p);

  EmResult res;
  for (int it = 0;; ++it) {
    const double ll = detail::em_e_step(x, p, r);
    res.log_likelihood.push_back(ll);
    if (it > 0 && ll - res.log_likelihood[res.log_likelihood.size() - 2] < opts.tol) {
      res.converged = true;
      break;
    }
    if (it >= opts.max_iters) break;
    detail::em_m_step(x, r, reg, p);
    res.iterations = it + 1;
  }

  std::vector<GaussianComponent> comps;
  comps.reserve(static_cast<std::size_t>(k));
  for (Index j = 0; j < k; ++j)
    comps.push_back(make_component(p.weights(j), p.means[static_cast<std::size_t>(j)], p.covs[static_cast<std::size_t>(j)]));
  res.model = GmmModel::normalized(std::move(comps));
  return res;
}

}  // namespace gmmcs
