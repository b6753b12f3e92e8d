#pragma once

// Analytic Bayesian inference for y = M x + w with a GMM prior on x. The
// posterior is again a GMM; each component is conditioned in gain form
// (innovation covariance S_i = M Sigma_i M^T + Sigma_w), which equals the
// information-form update but only factorizes l x l matrices.

#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "gmmcs/core_models.hpp"

namespace gmmcs {

struct PosteriorComponent {
  double weight = 0.0;
  double log_weight = 0.0;  // normalized, kept so tiny weights survive repeated updates
  VectorXd mean;
  MatrixXd covariance;
};

struct PosteriorGmm {
  std::vector<PosteriorComponent> components;
  double evidence_log = 0.0;  // log p(y_{1:k})
  int measurement_count = 0;

  Index dim() const { return components.empty() ? 0 : components.front().mean.size(); }
  std::size_t size() const { return components.size(); }

  VectorXd weights() const {
    VectorXd w(static_cast<Index>(components.size()));
    for (std::size_t i = 0; i < components.size(); ++i) w(static_cast<Index>(i)) = components[i].weight;
    return w;
  }
};

/// The k = 0 posterior: the prior itself.
inline PosteriorGmm prior_as_posterior(const GmmModel& prior) {
  PosteriorGmm post;
  post.components.reserve(prior.size());
  for (const auto& c : prior.components()) {
    post.components.push_back({c.weight, std::log(c.weight), c.mean, c.covariance.matrix()});
  }
  return post;
}

namespace detail {

inline void normalize_log_weights(PosteriorGmm& post, const VectorXd& log_terms) {
  const double lse = log_sum_exp(log_terms);
  require(std::isfinite(lse), ErrorKind::DegeneratePosterior, "measurement has zero likelihood under every component");
  for (std::size_t i = 0; i < post.components.size(); ++i) {
    auto& c = post.components[i];
    c.log_weight = log_terms(static_cast<Index>(i)) - lse;
    c.weight = std::exp(c.log_weight);
  }
  post.evidence_log += lse;
}

}  // namespace detail

/// Precomputed per-component predictive quantities for one (prior, kernel,
/// noise) triple. Conditioning on many y values (Monte Carlo, per-patch
/// reconstruction) reuses the factorizations.
class GmmConditioner {
 public:
  GmmConditioner(const GmmModel& prior, const SensingKernel& kernel, const NoiseModel& noise) : prior_(&prior) {
    require(kernel.cols() == prior.dim(), ErrorKind::ShapeError, "kernel columns do not match signal dimension");
    require(kernel.rows() == noise.dim(), ErrorKind::ShapeError, "kernel rows do not match noise dimension");
    const MatrixXd& m = kernel.matrix();
    rows_ = kernel.rows();
    parts_.reserve(prior.size());
    for (const auto& c : prior.components()) {
      require(c.covariance.is_positive_definite(), ErrorKind::SingularCovariance,
              "prior component covariance is singular");
      Part p;
      p.predicted_mean = m * c.mean;
      p.cross = m * c.covariance.matrix();  // M Sigma_i
      MatrixXd s = symmetrized(p.cross * m.transpose() + noise.covariance());
      p.innovation.compute(s);
      require(p.innovation.info() == Eigen::Success, ErrorKind::SingularCovariance,
              "innovation covariance is not positive definite");
      p.log_det = 2.0 * p.innovation.matrixLLT().diagonal().array().log().sum();
      p.gain = p.innovation.solve(p.cross).transpose();  // Sigma_i M^T S_i^{-1}
      p.log_weight = std::log(c.weight);
      parts_.push_back(std::move(p));
    }
  }

  Index rows() const { return rows_; }

  /// Unnormalized log w_i + log N(y; M mu_i, S_i).
  VectorXd log_terms(const VectorXd& y) const {
    require(y.size() == rows_, ErrorKind::ShapeError, "measurement length does not match kernel rows");
    VectorXd t(static_cast<Index>(parts_.size()));
    for (std::size_t i = 0; i < parts_.size(); ++i) {
      const auto& p = parts_[i];
      const VectorXd r = y - p.predicted_mean;
      const VectorXd z = p.innovation.matrixL().solve(r);
      t(static_cast<Index>(i)) =
          p.log_weight - 0.5 * (static_cast<double>(rows_) * kLog2Pi + p.log_det + z.squaredNorm());
    }
    return t;
  }

  /// log p(y).
  double evidence_log(const VectorXd& y) const { return log_sum_exp(log_terms(y)); }

  /// Posterior mean sum_i w~_i mu~_i without forming posterior covariances.
  VectorXd posterior_mean(const VectorXd& y) const {
    const VectorXd t = log_terms(y);
    const double lse = log_sum_exp(t);
    VectorXd mean = VectorXd::Zero(prior_->dim());
    for (std::size_t i = 0; i < parts_.size(); ++i) {
      const double w = std::exp(t(static_cast<Index>(i)) - lse);
      if (w == 0.0) continue;
      mean += w * component_mean(i, y);
    }
    return mean;
  }

  VectorXd component_mean(std::size_t i, const VectorXd& y) const {
    const auto& p = parts_[i];
    return (*prior_)[i].mean + p.gain * (y - p.predicted_mean);
  }

  MatrixXd component_covariance(std::size_t i) const {
    const auto& p = parts_[i];
    return symmetrized((*prior_)[i].covariance.matrix() - p.gain * p.cross);
  }

  PosteriorGmm posterior(const VectorXd& y) const {
    PosteriorGmm post;
    post.measurement_count = static_cast<int>(rows_);
    post.components.resize(parts_.size());
    for (std::size_t i = 0; i < parts_.size(); ++i) {
      post.components[i].mean = component_mean(i, y);
      post.components[i].covariance = component_covariance(i);
    }
    detail::normalize_log_weights(post, log_terms(y));
    return post;
  }

 private:
  struct Part {
    VectorXd predicted_mean;
    MatrixXd cross;
    Eigen::LLT<MatrixXd> innovation;
    double log_det = 0.0;
    MatrixXd gain;
    double log_weight = 0.0;
  };

  const GmmModel* prior_;
  Index rows_ = 0;
  std::vector<Part> parts_;
};

/// p(x | y) for y = M x + w, w ~ N(0, Sigma_w).
inline PosteriorGmm update_posterior(const GmmModel& prior, const SensingKernel& kernel, const NoiseModel& noise,
                                     const VectorXd& y) {
  require(y.allFinite(), ErrorKind::InvalidInput, "measurement has non-finite entries");
  if (kernel.rows() == 0) {
    require(kernel.cols() == prior.dim(), ErrorKind::ShapeError, "kernel columns do not match signal dimension");
    return prior_as_posterior(prior);
  }
  return GmmConditioner(prior, kernel, noise).posterior(y);
}

/// Conditional mean estimate sum_i w~_i mu~_i.
inline VectorXd posterior_mean(const PosteriorGmm& post) {
  VectorXd mean = VectorXd::Zero(post.dim());
  for (const auto& c : post.components) mean += c.weight * c.mean;
  return mean;
}

/// Index of the largest posterior weight; lowest index wins ties.
inline std::size_t dominant_component(const PosteriorGmm& post) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < post.components.size(); ++i)
    if (post.components[i].log_weight > post.components[best].log_weight) best = i;
  return best;
}

/// Adds one scalar measurement y_new = r^T x + w, w ~ N(0, noise_var), to an
/// existing posterior.
inline PosteriorGmm sequential_update(const PosteriorGmm& post, const VectorXd& new_row, double noise_var,
                                      double y_new) {
  require(noise_var > 0.0, ErrorKind::InvalidInput, "noise variance must be positive");
  require(new_row.size() == post.dim(), ErrorKind::ShapeError, "row length does not match signal dimension");
  require(new_row.allFinite() && std::isfinite(y_new), ErrorKind::InvalidInput, "non-finite row or measurement");
  require(new_row.norm() > 0.0, ErrorKind::DegenerateRow, "measurement row is zero");

  PosteriorGmm next;
  next.evidence_log = post.evidence_log;
  next.measurement_count = post.measurement_count + 1;
  next.components.resize(post.components.size());
  VectorXd log_terms(static_cast<Index>(post.components.size()));
  for (std::size_t i = 0; i < post.components.size(); ++i) {
    const auto& c = post.components[i];
    const VectorXd g = c.covariance * new_row;
    const double s = new_row.dot(g) + noise_var;
    const double innovation = y_new - new_row.dot(c.mean);
    auto& n = next.components[i];
    n.mean = c.mean + g * (innovation / s);
    n.covariance = symmetrized(c.covariance - (g * g.transpose()) / s);
    log_terms(static_cast<Index>(i)) =
        c.log_weight - 0.5 * (kLog2Pi + std::log(s) + innovation * innovation / s);
  }
  detail::normalize_log_weights(next, log_terms);
  return next;
}

/// Reinterprets a posterior as a GmmModel (e.g. as the source for online
/// design). Weights are renormalized from the log domain.
inline GmmModel posterior_as_gmm(const PosteriorGmm& post) {
  std::vector<GaussianComponent> comps;
  comps.reserve(post.size());
  for (const auto& c : post.components) comps.push_back(make_component(c.weight, c.mean, c.covariance));
  return GmmModel::normalized(std::move(comps));
}

}  // namespace gmmcs
