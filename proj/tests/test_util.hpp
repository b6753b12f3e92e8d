#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "gmmcs/gmmcs.hpp"

namespace gmmcs::testing {

/// Q diag(lambda) Q^T with Q from a QR of a Gaussian matrix and lambda
/// uniform on [lo, hi].
inline MatrixXd random_spd(Index m, std::uint64_t seed, double lo = 0.2, double hi = 2.0) {
  Rng rng(seed);
  const MatrixXd g = standard_normal_matrix(rng, m, m);
  const MatrixXd q = Eigen::HouseholderQR<MatrixXd>(g).householderQ();
  std::uniform_real_distribution<double> u(lo, hi);
  VectorXd lam(m);
  for (Index i = 0; i < m; ++i) lam(i) = u(rng);
  return symmetrized(q * lam.asDiagonal() * q.transpose());
}

inline MatrixXd random_orthogonal(Index m, std::uint64_t seed) {
  Rng rng(seed);
  return Eigen::HouseholderQR<MatrixXd>(standard_normal_matrix(rng, m, m)).householderQ();
}

inline GmmModel random_gmm(Index m, std::size_t k, std::uint64_t seed, double mean_scale = 1.0) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.5, 1.5);
  std::vector<double> w(k);
  std::vector<VectorXd> mu(k);
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    w[i] = u(rng);
    total += w[i];
    mu[i] = mean_scale * standard_normal_vector(rng, m);
  }
  std::vector<GaussianComponent> comps;
  for (std::size_t i = 0; i < k; ++i) comps.push_back(make_component(w[i] / total, mu[i], random_spd(m, derive_seed(seed, {i}))));
  return GmmModel::normalized(std::move(comps));
}

/// Composite trapezoid on [a, b] with n intervals; spectrally accurate for
/// smooth integrands that decay to zero at both ends.
inline double trapezoid(const std::function<double(double)>& f, double a, double b, int n) {
  const double h = (b - a) / n;
  double s = 0.5 * (f(a) + f(b));
  for (int i = 1; i < n; ++i) s += f(a + i * h);
  return s * h;
}

inline double normal_pdf(double x, double mean, double var) {
  return std::exp(-0.5 * (x - mean) * (x - mean) / var) / std::sqrt(2.0 * M_PI * var);
}

/// Central differences of f at every entry of m.
inline MatrixXd finite_difference_gradient(const std::function<double(const MatrixXd&)>& f, const MatrixXd& m,
                                           double step = 1e-5) {
  MatrixXd g(m.rows(), m.cols());
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) {
      MatrixXd p = m, q = m;
      p(r, c) += step;
      q(r, c) -= step;
      g(r, c) = (f(p) - f(q)) / (2.0 * step);
    }
  return g;
}

inline double max_relative_error(const MatrixXd& a, const MatrixXd& b) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(b.cwiseAbs().maxCoeff(), 1e-300);
}

/// Largest principal angle between the row spaces of a and b.
inline double max_principal_angle(const MatrixXd& a, const MatrixXd& b) {
  const MatrixXd qa = Eigen::HouseholderQR<MatrixXd>(a.transpose()).householderQ() * MatrixXd::Identity(a.cols(), a.rows());
  const MatrixXd qb = Eigen::HouseholderQR<MatrixXd>(b.transpose()).householderQ() * MatrixXd::Identity(b.cols(), b.rows());
  Eigen::JacobiSVD<MatrixXd> svd(qa.transpose() * qb);
  const double smin = std::min(1.0, svd.singularValues().minCoeff());
  return std::acos(smin);
}

inline double vector_angle(const VectorXd& a, const VectorXd& b) {
  const double c = std::min(1.0, std::abs(a.dot(b)) / (a.norm() * b.norm()));
  return std::acos(c);
}

/// Dense-grid Bayes for m in {1, 2}: posterior component weights and the
/// posterior mean by trapezoid sums over [-half_width, half_width]^m around
/// `center`. Densities use explicit inverses and determinants.
struct GridPosterior {
  VectorXd weights;
  VectorXd mean;
  double evidence = 0.0;
};

inline double dense_normal_pdf(const VectorXd& x, const VectorXd& mu, const MatrixXd& cov) {
  const VectorXd d = x - mu;
  const double q = d.dot(cov.inverse() * d);
  return std::exp(-0.5 * q) / std::sqrt(std::pow(2.0 * M_PI, static_cast<double>(x.size())) * cov.determinant());
}

inline GridPosterior grid_bayes(const GmmModel& prior, const MatrixXd& m, const MatrixXd& noise_cov, const VectorXd& y,
                                const VectorXd& center, double half_width, int n) {
  const Index dim = prior.dim();
  const double h = 2.0 * half_width / n;
  GridPosterior g;
  g.weights = VectorXd::Zero(static_cast<Index>(prior.size()));
  g.mean = VectorXd::Zero(dim);
  const int n2 = dim == 2 ? n : 0;
  for (int i = 0; i <= n; ++i) {
    for (int j = 0; j <= n2; ++j) {
      VectorXd x(dim);
      x(0) = center(0) - half_width + i * h;
      if (dim == 2) x(1) = center(1) - half_width + j * h;
      double wt = h * ((i == 0 || i == n) ? 0.5 : 1.0);
      if (dim == 2) wt *= h * ((j == 0 || j == n2) ? 0.5 : 1.0);
      const double lik = dense_normal_pdf(y, m * x, noise_cov);
      for (std::size_t c = 0; c < prior.size(); ++c) {
        const double v = wt * prior[c].weight * dense_normal_pdf(x, prior[c].mean, prior[c].covariance.matrix()) * lik;
        g.weights(static_cast<Index>(c)) += v;
        g.mean += v * x;
      }
    }
  }
  g.evidence = g.weights.sum();
  g.weights /= g.evidence;
  g.mean /= g.evidence;
  return g;
}

}  // namespace gmmcs::testing
