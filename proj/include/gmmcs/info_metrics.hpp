#pragma once

// Information measures for y = M x + w over the real field: Gaussian mutual
// information, the Monte Carlo MMSE matrix and the I-MMSE gradient, quadratic
// Renyi entropy of a GMM output with its analytic gradient, and the Gaussian
// Renyi/Shannon relations. All values are in nats.

#include <cmath>
#include <cstdint>
#include <memory>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "gmmcs/core_models.hpp"
#include "gmmcs/posterior.hpp"
#include "gmmcs/random.hpp"

namespace gmmcs {

namespace detail {

inline void require_channel_dims(const SensingKernel& kernel, Index source_dim, const NoiseModel& noise) {
  require(kernel.cols() == source_dim, ErrorKind::ShapeError, "kernel columns do not match source dimension");
  require(kernel.rows() == noise.dim(), ErrorKind::ShapeError, "kernel rows do not match noise dimension");
}

/// Cholesky of a covariance that must be positive definite.
inline Eigen::LLT<MatrixXd> factor_pd(const MatrixXd& a, const char* what) {
  Eigen::LLT<MatrixXd> llt(symmetrized(a));
  require(llt.info() == Eigen::Success, ErrorKind::SingularCovariance, what);
  return llt;
}

inline double llt_log_det(const Eigen::LLT<MatrixXd>& llt) {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

}  // namespace detail

/// Differential entropy of N(., Sigma): 1/2 log((2 pi e)^m det Sigma).
inline double gaussian_entropy(const CovarianceSpectrum& cov) {
  const double m = static_cast<double>(cov.dim());
  return 0.5 * (m * (kLog2Pi + 1.0) + cov.log_det());
}

/// Output covariance M Sigma_x M^T + Sigma_w.
inline MatrixXd output_covariance(const SensingKernel& kernel, const MatrixXd& source_cov, const NoiseModel& noise) {
  return symmetrized(kernel.matrix() * source_cov * kernel.matrix().transpose() + noise.covariance());
}

/// I(x; y) = 1/2 log det(I + M^T Sigma_w^{-1} M Sigma_x), evaluated as
/// 1/2 [log det(Sigma_w + M Sigma_x M^T) - log det Sigma_w].
inline double gaussian_mutual_information(const SensingKernel& kernel, const CovarianceSpectrum& source_cov,
                                          const NoiseModel& noise) {
  detail::require_channel_dims(kernel, source_cov.dim(), noise);
  if (kernel.rows() == 0) return 0.0;
  const auto llt = detail::factor_pd(output_covariance(kernel, source_cov.matrix(), noise),
                                     "output covariance is not positive definite");
  return 0.5 * (detail::llt_log_det(llt) - noise.log_det());
}

/// Shannon entropy of the Gaussian output y.
inline double gaussian_output_entropy(const SensingKernel& kernel, const CovarianceSpectrum& source_cov,
                                      const NoiseModel& noise) {
  detail::require_channel_dims(kernel, source_cov.dim(), noise);
  if (kernel.rows() == 0) return 0.0;
  const auto llt = detail::factor_pd(output_covariance(kernel, source_cov.matrix(), noise),
                                     "output covariance is not positive definite");
  return 0.5 * (static_cast<double>(kernel.rows()) * (kLog2Pi + 1.0) + detail::llt_log_det(llt));
}

/// Renyi entropy of order alpha of the Gaussian output:
/// h_s(y) - (l/2)(1 - ln(alpha)/(alpha - 1)).
inline double gaussian_renyi_entropy(const SensingKernel& kernel, const CovarianceSpectrum& source_cov,
                                     const NoiseModel& noise, double alpha) {
  require(alpha > 0.0 && alpha != 1.0, ErrorKind::InvalidInput, "Renyi order must be positive and differ from 1");
  const double l = static_cast<double>(kernel.rows());
  return gaussian_output_entropy(kernel, source_cov, noise) - 0.5 * l * (1.0 - std::log(alpha) / (alpha - 1.0));
}

/// Closed-form MMSE matrix of a Gaussian source:
/// Sigma_x - Sigma_x M^T (M Sigma_x M^T + Sigma_w)^{-1} M Sigma_x.
inline MatrixXd gaussian_mmse(const SensingKernel& kernel, const CovarianceSpectrum& source_cov,
                              const NoiseModel& noise) {
  detail::require_channel_dims(kernel, source_cov.dim(), noise);
  const MatrixXd& sx = source_cov.matrix();
  if (kernel.rows() == 0) return sx;
  const MatrixXd cross = kernel.matrix() * sx;
  const auto llt = detail::factor_pd(output_covariance(kernel, sx, noise), "output covariance is not positive definite");
  return symmetrized(sx - cross.transpose() * llt.solve(cross));
}

/// 1/2 tr(Sigma_w^{-1} M Sigma_x M^T): first-order MI in the low-SNR regime.
inline double low_snr_mi_approx(const SensingKernel& kernel, const CovarianceSpectrum& source_cov,
                                const NoiseModel& noise) {
  detail::require_channel_dims(kernel, source_cov.dim(), noise);
  if (kernel.rows() == 0) return 0.0;
  const MatrixXd& m = kernel.matrix();
  return 0.5 * (noise.inverse() * m * source_cov.matrix() * m.transpose()).trace();
}

/// Lower bound on the per-coordinate MMSE tr(E)/m from the entropy of x and
/// the mutual information: (1/(2 pi e)) exp((2/m)(h(x) - I(x;y))). Equality
/// holds for a scalar Gaussian source.
inline double mmse_mi_lower_bound(double entropy_x, double mi, Index m) {
  require(std::isfinite(entropy_x) && std::isfinite(mi) && m > 0, ErrorKind::InvalidInput,
          "bound needs finite entropy, mutual information and m > 0");
  return std::exp(2.0 * (entropy_x - mi) / static_cast<double>(m)) / (2.0 * std::numbers::pi * std::numbers::e);
}

struct MmseMatrix {
  MatrixXd matrix;
  CovarianceSpectrum spectrum;  // descending
  Index sample_count = 0;
  MatrixXd standard_error;  // elementwise
};

struct McEstimate {
  double value = 0.0;
  double standard_error = 0.0;
};

namespace detail {

inline constexpr Index kMcChunk = 2048;

/// Draws (x, w) pairs for chunk `chunk` of a Monte Carlo run. The stream
/// depends only on (seed, chunk), so results do not depend on thread count.
template <typename Visit>
void visit_channel_samples(const GmmModel& source, const NoiseModel& noise, Index n, std::uint64_t seed,
                           std::size_t chunk, Visit&& visit) {
  const Index begin = static_cast<Index>(chunk) * kMcChunk;
  const Index end = std::min(n, begin + kMcChunk);
  Rng rng(derive_seed(seed, {chunk}));
  auto pick = component_picker(source);
  const auto factors = sampling_factors(source);
  const MatrixXd noise_factor = noise.dim() == 0 ? MatrixXd(0, 0) : noise.spectrum().sqrt_factor();
  for (Index s = begin; s < end; ++s) {
    const VectorXd x = sample_gmm_point(source, factors, pick, rng, nullptr);
    const VectorXd w = noise.dim() == 0 ? VectorXd(0) : VectorXd(noise_factor * standard_normal_vector(rng, noise.dim()));
    visit(s, x, w);
  }
}

inline std::size_t chunk_count(Index n) { return static_cast<std::size_t>((n + kMcChunk - 1) / kMcChunk); }

}  // namespace detail

/// Monte Carlo estimate of E = E[(x - x^(y))(x - x^(y))^T] with one (x, w)
/// draw per sample and the analytic posterior mean x^(y).
inline MmseMatrix mmse_matrix_mc(const GmmModel& source, const SensingKernel& kernel, const NoiseModel& noise,
                                 Index n_samples, std::uint64_t seed, unsigned threads = default_thread_count()) {
  require(n_samples >= 100, ErrorKind::InvalidInput, "Monte Carlo MMSE needs at least 100 samples");
  detail::require_channel_dims(kernel, source.dim(), noise);
  const Index m = source.dim();
  const std::size_t chunks = detail::chunk_count(n_samples);
  std::vector<MatrixXd> sum(chunks, MatrixXd::Zero(m, m));
  std::vector<MatrixXd> sum_sq(chunks, MatrixXd::Zero(m, m));

  const bool empty = kernel.rows() == 0;
  const VectorXd prior_mean = source.mixture_mean();
  std::unique_ptr<GmmConditioner> cond;
  if (!empty) cond = std::make_unique<GmmConditioner>(source, kernel, noise);

  parallel_for(chunks, threads, [&](std::size_t c) {
    detail::visit_channel_samples(source, noise, n_samples, seed, c, [&](Index, const VectorXd& x, const VectorXd& w) {
      const VectorXd est = empty ? prior_mean : cond->posterior_mean(kernel.matrix() * x + w);
      const VectorXd e = x - est;
      const MatrixXd outer = e * e.transpose();
      sum[c] += outer;
      sum_sq[c] += outer.cwiseAbs2();
    });
  });

  MatrixXd total = MatrixXd::Zero(m, m);
  MatrixXd total_sq = MatrixXd::Zero(m, m);
  for (std::size_t c = 0; c < chunks; ++c) {
    total += sum[c];
    total_sq += sum_sq[c];
  }
  const double n = static_cast<double>(n_samples);
  MmseMatrix out;
  out.matrix = symmetrized(total / n);
  const MatrixXd var = ((total_sq / n) - out.matrix.cwiseAbs2()).cwiseMax(0.0) * (n / (n - 1.0));
  out.standard_error = (var / n).cwiseSqrt();
  out.sample_count = n_samples;
  out.spectrum = CovarianceSpectrum(out.matrix, SpectrumOrder::Descending);
  return out;
}

/// Wraps an exactly known MMSE matrix (zero standard error).
inline MmseMatrix exact_mmse(const MatrixXd& e) {
  MmseMatrix out;
  out.matrix = symmetrized(e);
  out.spectrum = CovarianceSpectrum(out.matrix, SpectrumOrder::Descending);
  out.standard_error = MatrixXd::Zero(e.rows(), e.cols());
  return out;
}

/// I-MMSE gradient of I(x; y) with respect to M: Sigma_w^{-1} M E.
inline MatrixXd mi_gradient(const SensingKernel& kernel, const NoiseModel& noise, const MmseMatrix& mmse) {
  require(kernel.rows() == noise.dim() && kernel.cols() == mmse.matrix.rows(), ErrorKind::ShapeError,
          "gradient operands disagree on dimensions");
  return noise.inverse() * kernel.matrix() * mmse.matrix;
}

/// Per-sample values log p(y|x) - log p(y) with the noise term replaced by its
/// exact mean; their average estimates I(x; y). Sample s uses the same (x, w)
/// draw for every kernel, so differences across kernels use common random
/// numbers.
inline VectorXd mutual_information_samples(const GmmModel& source, const SensingKernel& kernel,
                                           const NoiseModel& noise, Index n_samples, std::uint64_t seed,
                                           unsigned threads = default_thread_count()) {
  require(n_samples >= 1, ErrorKind::InvalidInput, "need at least one sample");
  detail::require_channel_dims(kernel, source.dim(), noise);
  VectorXd out = VectorXd::Zero(n_samples);
  if (kernel.rows() == 0) return out;
  const double l = static_cast<double>(kernel.rows());
  const double noise_term = -0.5 * (l * (kLog2Pi + 1.0) + noise.log_det());
  const GmmConditioner cond(source, kernel, noise);
  parallel_for(detail::chunk_count(n_samples), threads, [&](std::size_t c) {
    detail::visit_channel_samples(source, noise, n_samples, seed, c, [&](Index s, const VectorXd& x, const VectorXd& w) {
      out(s) = noise_term - cond.evidence_log(kernel.matrix() * x + w);
    });
  });
  return out;
}

inline McEstimate mutual_information_mc(const GmmModel& source, const SensingKernel& kernel, const NoiseModel& noise,
                                        Index n_samples, std::uint64_t seed,
                                        unsigned threads = default_thread_count()) {
  const VectorXd v = mutual_information_samples(source, kernel, noise, n_samples, seed, threads);
  const double n = static_cast<double>(v.size());
  const double mean = v.mean();
  const double var = n > 1 ? (v.array() - mean).square().sum() / (n - 1.0) : 0.0;
  return {mean, std::sqrt(var / n)};
}

/// Pairwise term N(0; mu_ij, Sigma_ij) of the quadratic Renyi entropy with
/// mu_ij = M (mu_i - mu_j) and Sigma_ij = M (Sigma_i + Sigma_j) M^T + 2 Sigma_w.
struct PairwiseGaussianTerm {
  VectorXd mu_ij;
  MatrixXd sigma_ij;
  Eigen::LLT<MatrixXd> factor;
  double log_density_at_zero = 0.0;
};

inline PairwiseGaussianTerm pairwise_term(const GaussianComponent& a, const GaussianComponent& b,
                                          const SensingKernel& kernel, const NoiseModel& noise) {
  const MatrixXd& m = kernel.matrix();
  PairwiseGaussianTerm t;
  t.mu_ij = m * (a.mean - b.mean);
  t.sigma_ij = symmetrized(m * (a.covariance.matrix() + b.covariance.matrix()) * m.transpose() +
                           2.0 * noise.covariance());
  t.factor = detail::factor_pd(t.sigma_ij, "pairwise output covariance is not positive definite");
  const VectorXd z = t.factor.matrixL().solve(t.mu_ij);
  t.log_density_at_zero =
      -0.5 * (static_cast<double>(kernel.rows()) * kLog2Pi + detail::llt_log_det(t.factor) + z.squaredNorm());
  return t;
}

namespace detail {

/// log p(i) p(j) N(0; mu_ij, Sigma_ij) over unordered pairs i <= j; the
/// multiplicity (1 or 2) is folded into the log term.
template <typename Visit>
void visit_pairs(const GmmModel& source, const SensingKernel& kernel, const NoiseModel& noise, Visit&& visit) {
  for (std::size_t i = 0; i < source.size(); ++i) {
    for (std::size_t j = i; j < source.size(); ++j) {
      const double wi = source[i].weight;
      const double wj = source[j].weight;
      if (wi == 0.0 || wj == 0.0) continue;
      PairwiseGaussianTerm t = pairwise_term(source[i], source[j], kernel, noise);
      const double mult = (i == j) ? 0.0 : std::numbers::ln2;
      visit(i, j, t, std::log(wi) + std::log(wj) + mult + t.log_density_at_zero);
    }
  }
}

}  // namespace detail

/// h_2(y) = -log sum_{i,j} p(i) p(j) N(0; mu_ij, Sigma_ij).
inline double renyi2_entropy_gmm(const GmmModel& source, const SensingKernel& kernel, const NoiseModel& noise) {
  require(kernel.rows() >= 1, ErrorKind::InvalidInput, "Renyi entropy needs at least one measurement");
  detail::require_channel_dims(kernel, source.dim(), noise);
  std::vector<double> logs;
  detail::visit_pairs(source, kernel, noise,
                      [&](std::size_t, std::size_t, const PairwiseGaussianTerm&, double lt) { logs.push_back(lt); });
  return -log_sum_exp(Eigen::Map<const VectorXd>(logs.data(), static_cast<Index>(logs.size())));
}

/// Analytic gradient of h_2(y) with respect to M: the pair-weighted average of
/// -grad log N(0; mu_ij, Sigma_ij), where
///   grad log N_ij = -Sigma_ij^{-1} M S - Sigma_ij^{-1} M d d^T (I - M^T Sigma_ij^{-1} M S),
/// S = Sigma_i + Sigma_j, d = mu_i - mu_j.
inline MatrixXd renyi2_gradient_gmm(const GmmModel& source, const SensingKernel& kernel, const NoiseModel& noise) {
  require(kernel.rows() >= 1, ErrorKind::InvalidInput, "Renyi gradient needs at least one measurement");
  detail::require_channel_dims(kernel, source.dim(), noise);
  const MatrixXd& m = kernel.matrix();
  std::vector<double> logs;
  std::vector<MatrixXd> grads;
  detail::visit_pairs(source, kernel, noise,
                      [&](std::size_t i, std::size_t j, const PairwiseGaussianTerm& t, double lt) {
                        const MatrixXd s = source[i].covariance.matrix() + source[j].covariance.matrix();
                        const VectorXd d = source[i].mean - source[j].mean;
                        const MatrixXd a = t.factor.solve(m);  // Sigma_ij^{-1} M
                        const MatrixXd as = a * s;
                        MatrixXd g = as;
                        if (d.squaredNorm() > 0.0) {
                          const VectorXd ad = a * d;
                          const Eigen::RowVectorXd tail = d.transpose() - (m * d).transpose() * as;
                          g += ad * tail;
                        }
                        logs.push_back(lt);
                        grads.push_back(std::move(g));
                      });
  const VectorXd lv = Eigen::Map<const VectorXd>(logs.data(), static_cast<Index>(logs.size()));
  const double lse = log_sum_exp(lv);
  MatrixXd grad = MatrixXd::Zero(m.rows(), m.cols());
  for (std::size_t k = 0; k < grads.size(); ++k) grad += std::exp(lv(static_cast<Index>(k)) - lse) * grads[k];
  return grad;
}

}  // namespace gmmcs
