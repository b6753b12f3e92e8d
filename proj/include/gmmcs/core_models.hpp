#pragma once

// Foundational numeric types: covariance spectra with fixed ordering
// conventions, the sensing kernel with its cached SVD, Gaussian mixtures and
// the noise model.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gmmcs/error.hpp"
#include "gmmcs/random.hpp"

namespace gmmcs {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr double kLog2Pi = 1.8378770664093454836;  // ln(2*pi)

inline double log_sum_exp(const VectorXd& v) {
  if (v.size() == 0) return -std::numeric_limits<double>::infinity();
  const double hi = v.maxCoeff();
  if (!std::isfinite(hi)) return hi;
  return hi + std::log((v.array() - hi).exp().sum());
}

inline MatrixXd symmetrized(const MatrixXd& a) { return 0.5 * (a + a.transpose()); }

inline bool all_finite(const MatrixXd& a) { return a.allFinite(); }

/// Flips v so that its largest-magnitude entry (first one on ties) is positive.
/// Returns the applied sign.
inline double canonicalize_sign(Eigen::Ref<VectorXd> v) {
  if (v.size() == 0) return 1.0;
  Index best = 0;
  for (Index i = 1; i < v.size(); ++i)
    if (std::abs(v(i)) > std::abs(v(best))) best = i;
  if (v(best) < 0) {
    v = -v;
    return -1.0;
  }
  return 1.0;
}

enum class SpectrumOrder { Descending, Ascending };

/// Eigendecomposition of a symmetric PSD matrix with a fixed ordering and sign
/// convention. Eigenvalues within 1e-10 (scaled by max(1, |lambda_max|)) are
/// ties and keep the solver's native relative order.
class CovarianceSpectrum {
 public:
  static constexpr double kTieTolerance = 1e-10;
  static constexpr double kClampTolerance = 1e-12;

  CovarianceSpectrum() = default;

  CovarianceSpectrum(const MatrixXd& matrix, SpectrumOrder order) : order_(order) {
    require(matrix.rows() == matrix.cols(), ErrorKind::ShapeError, "covariance must be square");
    require(matrix.allFinite(), ErrorKind::InvalidInput, "covariance has non-finite entries");
    matrix_ = symmetrized(matrix);
    const Index m = matrix_.rows();
    if (m == 0) return;
    Eigen::SelfAdjointEigenSolver<MatrixXd> solver(matrix_);
    require(solver.info() == Eigen::Success, ErrorKind::InvalidInput, "eigendecomposition failed");
    VectorXd vals = solver.eigenvalues();  // ascending
    MatrixXd vecs = solver.eigenvectors();

    const double scale = std::max(1.0, std::abs(vals(m - 1)));
    for (Index i = 0; i < m; ++i) {
      if (vals(i) < 0) {
        require(vals(i) > -kClampTolerance * scale, ErrorKind::InvalidInput,
                "covariance is not positive semidefinite (eigenvalue " + std::to_string(vals(i)) + ")");
        vals(i) = 0.0;
      }
    }

    std::vector<Index> perm(static_cast<std::size_t>(m));
    if (order == SpectrumOrder::Ascending) {
      for (Index i = 0; i < m; ++i) perm[static_cast<std::size_t>(i)] = i;
    } else {
      // Reverse whole tie groups, keeping native order inside each group.
      std::vector<std::pair<Index, Index>> groups;
      Index start = 0;
      for (Index i = 1; i <= m; ++i) {
        if (i == m || vals(i) - vals(i - 1) > kTieTolerance * scale) {
          groups.emplace_back(start, i);
          start = i;
        }
      }
      std::size_t k = 0;
      for (auto g = groups.rbegin(); g != groups.rend(); ++g)
        for (Index i = g->first; i < g->second; ++i) perm[k++] = i;
    }

    eigenvalues_.resize(m);
    eigenvectors_.resize(m, m);
    for (Index k = 0; k < m; ++k) {
      const Index src = perm[static_cast<std::size_t>(k)];
      eigenvalues_(k) = vals(src);
      eigenvectors_.col(k) = vecs.col(src);
      canonicalize_sign(eigenvectors_.col(k));
    }
  }

  Index dim() const { return matrix_.rows(); }
  const MatrixXd& matrix() const { return matrix_; }
  const VectorXd& eigenvalues() const { return eigenvalues_; }
  const MatrixXd& eigenvectors() const { return eigenvectors_; }
  SpectrumOrder order() const { return order_; }

  double max_eigenvalue() const { return dim() == 0 ? 0.0 : eigenvalues_.maxCoeff(); }
  double min_eigenvalue() const { return dim() == 0 ? 0.0 : eigenvalues_.minCoeff(); }

  bool is_positive_definite() const {
    if (dim() == 0) return true;
    const double lo = min_eigenvalue();
    return lo > 0.0 && lo >= 1e-15 * max_eigenvalue();
  }

  double log_det() const {
    require(is_positive_definite(), ErrorKind::SingularCovariance, "log-determinant of singular covariance");
    return eigenvalues_.array().log().sum();
  }

  /// v^T Sigma^{-1} v through the eigenbasis.
  double inverse_quadratic_form(const VectorXd& v) const {
    require(is_positive_definite(), ErrorKind::SingularCovariance, "inverse of singular covariance");
    const VectorXd z = eigenvectors_.transpose() * v;
    return (z.array().square() / eigenvalues_.array()).sum();
  }

  MatrixXd inverse() const {
    require(is_positive_definite(), ErrorKind::SingularCovariance, "inverse of singular covariance");
    return eigenvectors_ * eigenvalues_.cwiseInverse().asDiagonal() * eigenvectors_.transpose();
  }

  /// Symmetric square root U diag(sqrt(lambda)).
  MatrixXd sqrt_factor() const { return eigenvectors_ * eigenvalues_.cwiseSqrt().asDiagonal(); }

 private:
  MatrixXd matrix_;
  VectorXd eigenvalues_;
  MatrixXd eigenvectors_;
  SpectrumOrder order_ = SpectrumOrder::Descending;
};

/// The l x m projection matrix together with its SVD M = U diag(s) V^T
/// (U: l x l, s nonincreasing, V: m x l with orthonormal columns).
class SensingKernel {
 public:
  SensingKernel() = default;

  Index rows() const { return matrix_.rows(); }
  Index cols() const { return matrix_.cols(); }
  const MatrixXd& matrix() const { return matrix_; }
  const MatrixXd& left_singular_vectors() const { return u_; }
  const VectorXd& singular_values() const { return s_; }
  const MatrixXd& right_singular_vectors() const { return v_; }

  friend SensingKernel decompose_kernel(const MatrixXd& matrix);

 private:
  MatrixXd matrix_;
  MatrixXd u_;
  VectorXd s_;
  MatrixXd v_;
};

inline SensingKernel decompose_kernel(const MatrixXd& matrix) {
  require(matrix.allFinite(), ErrorKind::InvalidInput, "kernel has non-finite entries");
  require(matrix.rows() <= matrix.cols(), ErrorKind::ShapeError,
          "kernel must have no more rows than columns (" + std::to_string(matrix.rows()) + " > " +
              std::to_string(matrix.cols()) + ")");
  SensingKernel k;
  k.matrix_ = matrix;
  const Index l = matrix.rows();
  if (l == 0) {
    k.u_.resize(0, 0);
    k.s_.resize(0);
    k.v_.resize(matrix.cols(), 0);
    return k;
  }
  Eigen::JacobiSVD<MatrixXd> svd(matrix, Eigen::ComputeThinU | Eigen::ComputeThinV);
  k.u_ = svd.matrixU();
  k.s_ = svd.singularValues();
  k.v_ = svd.matrixV();
  for (Index i = 0; i < l; ++i) {
    if (canonicalize_sign(k.u_.col(i)) < 0) k.v_.col(i) = -k.v_.col(i);
  }
  return k;
}

/// tr(M M^T) / l; zero for an empty kernel.
inline double kernel_power(const SensingKernel& kernel) {
  if (kernel.rows() == 0) return 0.0;
  return kernel.matrix().squaredNorm() / static_cast<double>(kernel.rows());
}

/// Rescales M so that kernel_power equals `budget`.
inline SensingKernel normalize_power(const SensingKernel& kernel, double budget = 1.0) {
  require(budget > 0.0, ErrorKind::InvalidInput, "power budget must be positive");
  const double power = kernel_power(kernel);
  require(power > 0.0, ErrorKind::DegenerateKernel, "cannot normalize a zero kernel");
  const double c = std::sqrt(budget / power);
  if (c == 1.0) return kernel;
  return decompose_kernel(c * kernel.matrix());
}

struct GaussianComponent {
  double weight = 0.0;
  VectorXd mean;
  CovarianceSpectrum covariance;  // descending
};

inline GaussianComponent make_component(double weight, VectorXd mean, const MatrixXd& covariance) {
  require(weight >= 0.0 && weight <= 1.0 + 1e-12, ErrorKind::InvalidInput, "component weight outside [0,1]");
  require(mean.size() == covariance.rows(), ErrorKind::ShapeError, "mean/covariance dimension mismatch");
  require(mean.allFinite(), ErrorKind::InvalidInput, "component mean has non-finite entries");
  return GaussianComponent{weight, std::move(mean), CovarianceSpectrum(covariance, SpectrumOrder::Descending)};
}

class GmmModel {
 public:
  static constexpr double kWeightTolerance = 1e-12;

  GmmModel() = default;

  explicit GmmModel(std::vector<GaussianComponent> components) : components_(std::move(components)) {
    require(!components_.empty(), ErrorKind::InvalidInput, "mixture needs at least one component");
    dim_ = components_.front().mean.size();
    double total = 0.0;
    for (const auto& c : components_) {
      require(c.mean.size() == dim_ && c.covariance.dim() == dim_, ErrorKind::ShapeError,
              "mixture components disagree on dimension");
      require(c.weight >= 0.0, ErrorKind::InvalidInput, "negative mixture weight");
      total += c.weight;
    }
    require(std::abs(total - 1.0) <= kWeightTolerance, ErrorKind::InvalidInput,
            "mixture weights must sum to 1 (got " + std::to_string(total) + ")");
  }

  /// Builds a mixture after renormalizing the weights to sum to one.
  static GmmModel normalized(std::vector<GaussianComponent> components) {
    double total = 0.0;
    for (const auto& c : components) total += c.weight;
    require(total > 0.0, ErrorKind::InvalidInput, "mixture weights sum to zero");
    for (auto& c : components) c.weight /= total;
    return GmmModel(std::move(components));
  }

  static GmmModel single(const VectorXd& mean, const MatrixXd& covariance) {
    return GmmModel({make_component(1.0, mean, covariance)});
  }

  Index dim() const { return dim_; }
  std::size_t size() const { return components_.size(); }
  const std::vector<GaussianComponent>& components() const { return components_; }
  const GaussianComponent& operator[](std::size_t i) const { return components_[i]; }

  VectorXd mixture_mean() const {
    VectorXd mu = VectorXd::Zero(dim_);
    for (const auto& c : components_) mu += c.weight * c.mean;
    return mu;
  }

  /// Total covariance including the scatter of the component means.
  MatrixXd mixture_covariance() const {
    const VectorXd mu = mixture_mean();
    MatrixXd cov = MatrixXd::Zero(dim_, dim_);
    for (const auto& c : components_) {
      const VectorXd d = c.mean - mu;
      cov += c.weight * (c.covariance.matrix() + d * d.transpose());
    }
    return symmetrized(cov);
  }

 private:
  std::vector<GaussianComponent> components_;
  Index dim_ = 0;
};

/// Noise covariance with eigenvalues ascending; must be positive definite.
class NoiseModel {
 public:
  NoiseModel() = default;

  explicit NoiseModel(const MatrixXd& covariance) : spectrum_(covariance, SpectrumOrder::Ascending) {
    require(spectrum_.dim() == 0 || spectrum_.is_positive_definite(), ErrorKind::SingularCovariance,
            "noise covariance must be positive definite");
    inverse_ = spectrum_.dim() == 0 ? MatrixXd(0, 0) : spectrum_.inverse();
  }

  static NoiseModel isotropic(Index dim, double variance) {
    require(variance > 0.0, ErrorKind::SingularCovariance, "noise variance must be positive");
    return NoiseModel(variance * MatrixXd::Identity(dim, dim));
  }

  Index dim() const { return spectrum_.dim(); }
  const CovarianceSpectrum& spectrum() const { return spectrum_; }
  const MatrixXd& covariance() const { return spectrum_.matrix(); }
  const MatrixXd& inverse() const { return inverse_; }
  double log_det() const { return dim() == 0 ? 0.0 : spectrum_.log_det(); }

 private:
  CovarianceSpectrum spectrum_;
  MatrixXd inverse_;
};

/// log N(x; mean, Sigma) evaluated through the covariance eigenbasis.
inline double gaussian_log_density(const VectorXd& x, const VectorXd& mean, const CovarianceSpectrum& cov) {
  const double d = static_cast<double>(x.size());
  return -0.5 * (d * kLog2Pi + cov.log_det() + cov.inverse_quadratic_form(x - mean));
}

/// log sum_i p(i) N(x; mu_i, Sigma_i) with log-sum-exp stabilization.
inline double gmm_log_density(const GmmModel& model, const VectorXd& x) {
  require(x.size() == model.dim(), ErrorKind::ShapeError, "point dimension does not match the mixture");
  require(x.allFinite(), ErrorKind::InvalidInput, "point has non-finite entries");
  VectorXd terms(static_cast<Index>(model.size()));
  for (std::size_t i = 0; i < model.size(); ++i) {
    const auto& c = model[i];
    terms(static_cast<Index>(i)) = std::log(c.weight) + gaussian_log_density(x, c.mean, c.covariance);
  }
  return log_sum_exp(terms);
}

/// Draws one point; returns the component index through `component`.
inline VectorXd sample_gmm_point(const GmmModel& model, const std::vector<MatrixXd>& factors,
                                 std::discrete_distribution<std::size_t>& pick, Rng& rng, std::size_t* component) {
  const std::size_t i = pick(rng);
  if (component != nullptr) *component = i;
  return model[i].mean + factors[i] * standard_normal_vector(rng, model.dim());
}

inline std::vector<MatrixXd> sampling_factors(const GmmModel& model) {
  std::vector<MatrixXd> factors;
  factors.reserve(model.size());
  for (const auto& c : model.components()) factors.push_back(c.covariance.sqrt_factor());
  return factors;
}

inline std::discrete_distribution<std::size_t> component_picker(const GmmModel& model) {
  std::vector<double> w;
  for (const auto& c : model.components()) w.push_back(c.weight);
  return std::discrete_distribution<std::size_t>(w.begin(), w.end());
}

/// n i.i.d. draws as the rows of an n x m matrix; component labels are written
/// to `labels` when given.
inline MatrixXd sample_gmm(const GmmModel& model, Index n, std::uint64_t seed,
                           std::vector<std::size_t>* labels = nullptr) {
  require(n >= 1, ErrorKind::InvalidInput, "sample count must be positive");
  Rng rng(seed);
  auto pick = component_picker(model);
  const auto factors = sampling_factors(model);
  MatrixXd out(n, model.dim());
  if (labels != nullptr) labels->assign(static_cast<std::size_t>(n), 0);
  for (Index s = 0; s < n; ++s) {
    std::size_t c = 0;
    out.row(s) = sample_gmm_point(model, factors, pick, rng, &c).transpose();
    if (labels != nullptr) (*labels)[static_cast<std::size_t>(s)] = c;
  }
  return out;
}

}  // namespace gmmcs
