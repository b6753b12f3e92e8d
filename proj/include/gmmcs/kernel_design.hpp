#pragma once

// Offline kernel design under the trace power constraint tr(M M^T)/l <= 1:
// closed-form waterfilling for Gaussian sources, multi-restart projected
// gradient ascent on mutual information or quadratic Renyi entropy, the
// mercury-waterfilling KKT residual check, and the random baseline.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "gmmcs/core_models.hpp"
#include "gmmcs/info_metrics.hpp"
#include "gmmcs/random.hpp"

namespace gmmcs {

struct DesignConfig {
  double step_size = 1.0;  // initial step of every backtracking search
  int max_iters = 200;
  int restarts = 5;
  double tol = 1e-6;  // stop when the tangential gradient norm falls below this
  Index mc_samples = 20000;
  std::uint64_t seed = 0;
  bool waterfill_init = true;  // restart 0 starts from waterfilling on the mixture covariance
  double armijo = 1e-4;
  int max_backtracks = 40;
  unsigned threads = default_thread_count();

  void validate() const {
    require(step_size >= 0.0 && std::isfinite(step_size), ErrorKind::InvalidInput, "step size must be >= 0");
    require(max_iters >= 1 && restarts >= 1, ErrorKind::InvalidInput, "iteration and restart counts must be >= 1");
    require(tol > 0.0, ErrorKind::InvalidInput, "tolerance must be positive");
    require(mc_samples >= 100, ErrorKind::InvalidInput, "at least 100 Monte Carlo samples are required");
  }
};

struct DesignResult {
  SensingKernel kernel;
  double objective = -std::numeric_limits<double>::infinity();
  bool converged = false;
  int iterations = 0;
  int restart = 0;
  std::vector<double> objective_trace;  // objective at every accepted iterate, starting with the init
};

/// Water level eta with sum_i (1/eta - r_i)^+ = budget. Infinite ratios are
/// modes that can never be active.
inline double waterfill_level(const std::vector<double>& ratios, double budget) {
  require(!ratios.empty(), ErrorKind::InvalidInput, "waterfilling needs at least one ratio");
  require(budget > 0.0, ErrorKind::InvalidInput, "waterfilling budget must be positive");
  std::vector<double> finite;
  for (double r : ratios) {
    require(!(r < 0.0) && !std::isnan(r), ErrorKind::InvalidInput, "waterfilling ratios must be nonnegative");
    if (std::isfinite(r)) finite.push_back(r);
  }
  require(!finite.empty(), ErrorKind::InvalidInput, "waterfilling needs at least one finite ratio");

  const double r_min = *std::min_element(finite.begin(), finite.end());
  auto filled = [&](double level) {
    double s = 0.0;
    for (double r : finite) s += std::max(0.0, level - r);
    return s;
  };
  double lo = r_min;
  double hi = r_min + budget;
  for (int it = 0; it < 200 && hi - lo > 0.0; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (filled(mid) < budget ? lo : hi) = mid;
  }
  // The active set at the bracketed level fixes the level exactly.
  const double level_guess = 0.5 * (lo + hi);
  double sum_active = 0.0;
  int active = 0;
  for (double r : finite) {
    if (r < level_guess) {
      sum_active += r;
      ++active;
    }
  }
  if (active == 0) return 1.0 / level_guess;
  return static_cast<double>(active) / (budget + sum_active);
}

/// lambda_i = (1/eta - r_i)^+ for the level returned by waterfill_level.
inline VectorXd waterfill_allocation(const std::vector<double>& ratios, double budget) {
  const double level = 1.0 / waterfill_level(ratios, budget);
  VectorXd lambda(static_cast<Index>(ratios.size()));
  for (std::size_t i = 0; i < ratios.size(); ++i) lambda(static_cast<Index>(i)) = std::max(0.0, level - ratios[i]);
  return lambda;
}

/// Optimal kernel for a Gaussian source: M = U_w diag(sqrt(lambda*)) U_x^T
/// restricted to the l leading source modes, with the strongest source mode
/// paired with the weakest noise mode and lambda* from waterfilling on
/// lambda_w,i / lambda_x,i with sum lambda* = l.
inline SensingKernel design_gaussian_waterfilling(const CovarianceSpectrum& source_cov, const NoiseModel& noise,
                                                  Index l) {
  const Index m = source_cov.dim();
  require(l >= 1 && l <= m, ErrorKind::ShapeError, "waterfilling needs 1 <= l <= m");
  require(noise.dim() == l, ErrorKind::ShapeError, "noise dimension must equal the number of rows");
  require(source_cov.order() == SpectrumOrder::Descending, ErrorKind::InvalidInput,
          "source spectrum must be in descending order");
  require(source_cov.max_eigenvalue() > 0.0, ErrorKind::DegenerateSource, "all source eigenvalues are zero");

  const VectorXd& lx = source_cov.eigenvalues();
  const VectorXd& lw = noise.spectrum().eigenvalues();
  std::vector<double> ratios(static_cast<std::size_t>(l));
  for (Index i = 0; i < l; ++i)
    ratios[static_cast<std::size_t>(i)] = lx(i) > 0.0 ? lw(i) / lx(i) : std::numeric_limits<double>::infinity();
  const VectorXd lambda = waterfill_allocation(ratios, static_cast<double>(l));

  const MatrixXd& uw = noise.spectrum().eigenvectors();
  const MatrixXd& ux = source_cov.eigenvectors();
  MatrixXd mat = MatrixXd::Zero(l, m);
  for (Index i = 0; i < l; ++i)
    if (lambda(i) > 0.0) mat += std::sqrt(lambda(i)) * uw.col(i) * ux.col(i).transpose();
  return decompose_kernel(mat);
}

/// I.i.d. N(0,1) entries, rescaled to unit power.
inline SensingKernel random_kernel(Index l, Index m, std::uint64_t seed) {
  require(l >= 1 && l <= m, ErrorKind::ShapeError, "random kernel needs 1 <= l <= m");
  Rng rng(seed);
  return normalize_power(decompose_kernel(standard_normal_matrix(rng, l, m)), 1.0);
}

namespace detail {

using KernelObjective = std::function<double(const SensingKernel&)>;
using KernelGradient = std::function<MatrixXd(const SensingKernel&)>;

/// Projected gradient ascent on the sphere tr(M M^T) = budget * l with
/// Armijo backtracking (halving from cfg.step_size).
inline DesignResult ascend_on_power_sphere(const SensingKernel& init, const KernelObjective& objective,
                                           const KernelGradient& gradient, const DesignConfig& cfg,
                                           double budget = 1.0) {
  DesignResult res;
  res.kernel = normalize_power(init, budget);
  res.objective = objective(res.kernel);
  res.objective_trace.push_back(res.objective);
  if (cfg.step_size == 0.0) return res;

  for (int it = 0; it < cfg.max_iters; ++it) {
    const MatrixXd& m = res.kernel.matrix();
    const MatrixXd g = gradient(res.kernel);
    const MatrixXd tangential = g - (g.cwiseProduct(m).sum() / m.squaredNorm()) * m;
    if (tangential.norm() < cfg.tol) {
      res.converged = true;
      break;
    }
    double step = cfg.step_size;
    bool accepted = false;
    for (int b = 0; b < cfg.max_backtracks; ++b, step *= 0.5) {
      const MatrixXd trial_m = m + step * g;
      if (trial_m.squaredNorm() == 0.0) continue;
      SensingKernel trial = normalize_power(decompose_kernel(trial_m), budget);
      const double f = objective(trial);
      const double predicted = g.cwiseProduct(trial.matrix() - m).sum();
      if (std::isfinite(f) && f >= res.objective + cfg.armijo * predicted && f >= res.objective) {
        res.kernel = std::move(trial);
        res.objective = f;
        res.objective_trace.push_back(f);
        accepted = true;
        break;
      }
    }
    res.iterations = it + 1;
    if (!accepted) {
      // No ascent step exists at machine resolution: a stationary point up to
      // the accuracy of the objective.
      res.converged = true;
      break;
    }
  }
  return res;
}

inline std::vector<SensingKernel> restart_inits(const GmmModel& source, const NoiseModel& noise, Index l,
                                                const DesignConfig& cfg) {
  std::vector<SensingKernel> inits;
  for (int r = 0; r < cfg.restarts; ++r) {
    if (r == 0 && cfg.waterfill_init) {
      try {
        const CovarianceSpectrum total(source.mixture_covariance(), SpectrumOrder::Descending);
        SensingKernel k = design_gaussian_waterfilling(total, noise, l);
        if (kernel_power(k) > 0.0) {
          inits.push_back(std::move(k));
          continue;
        }
      } catch (const Error&) {
        // fall through to a random start
      }
    }
    inits.push_back(random_kernel(l, source.dim(), derive_seed(cfg.seed, {static_cast<std::uint64_t>(r)})));
  }
  return inits;
}

inline DesignResult best_of_restarts(const std::vector<SensingKernel>& inits, const KernelObjective& objective,
                                     const KernelGradient& gradient, const DesignConfig& cfg) {
  std::vector<DesignResult> runs(inits.size());
  parallel_for(inits.size(), cfg.threads, [&](std::size_t r) {
    runs[r] = ascend_on_power_sphere(inits[r], objective, gradient, cfg);
    runs[r].restart = static_cast<int>(r);
  });
  std::size_t best = 0;
  for (std::size_t r = 1; r < runs.size(); ++r)
    if (runs[r].objective > runs[best].objective) best = r;
  return runs[best];
}

inline constexpr std::uint64_t kObjectiveStream = 0x0b1ec7;
inline constexpr std::uint64_t kGradientStream = 0x96ad;

}  // namespace detail

/// Estimated I(x; y) used as the design objective: closed form for a single
/// Gaussian component, Monte Carlo with a fixed stream otherwise.
inline double design_mutual_information(const GmmModel& source, const SensingKernel& kernel, const NoiseModel& noise,
                                        const DesignConfig& cfg) {
  if (source.size() == 1) return gaussian_mutual_information(kernel, source[0].covariance, noise);
  return mutual_information_mc(source, kernel, noise, cfg.mc_samples,
                               derive_seed(cfg.seed, {detail::kObjectiveStream}), 1)
      .value;
}

/// Maximizes I(x; y) over M with the I-MMSE gradient Sigma_w^{-1} M E.
inline DesignResult design_gradient_ascent_mi(const GmmModel& source, const NoiseModel& noise, Index l,
                                              const DesignConfig& cfg) {
  cfg.validate();
  require(l >= 1 && l <= source.dim() && noise.dim() == l, ErrorKind::ShapeError,
          "design needs 1 <= l <= m and noise of dimension l");
  const bool gaussian = source.size() == 1;
  auto objective = [&](const SensingKernel& k) { return design_mutual_information(source, k, noise, cfg); };
  auto gradient = [&](const SensingKernel& k) -> MatrixXd {
    if (gaussian) return mi_gradient(k, noise, exact_mmse(gaussian_mmse(k, source[0].covariance, noise)));
    return mi_gradient(k, noise,
                       mmse_matrix_mc(source, k, noise, cfg.mc_samples,
                                      derive_seed(cfg.seed, {detail::kGradientStream}), 1));
  };
  return detail::best_of_restarts(detail::restart_inits(source, noise, l, cfg), objective, gradient, cfg);
}

/// Maximizes the quadratic Renyi entropy h_2(y) with its analytic gradient.
inline DesignResult design_gradient_ascent_renyi2(const GmmModel& source, const NoiseModel& noise, Index l,
                                                  const DesignConfig& cfg) {
  cfg.validate();
  require(l >= 1 && l <= source.dim() && noise.dim() == l, ErrorKind::ShapeError,
          "design needs 1 <= l <= m and noise of dimension l");
  auto objective = [&](const SensingKernel& k) { return renyi2_entropy_gmm(source, k, noise); };
  auto gradient = [&](const SensingKernel& k) { return renyi2_gradient_gmm(source, k, noise); };
  return detail::best_of_restarts(detail::restart_inits(source, noise, l, cfg), objective, gradient, cfg);
}

struct KktReport {
  double left_alignment_residual = 0.0;
  double diagonalization_residual = 0.0;
  double mercury_residual = 0.0;
  double water_level = 0.0;  // eta fitted over the active modes
  std::vector<Index> noise_mode;  // best-fit pairing: kernel mode i -> noise eigenvector noise_mode[i]
  Index active_modes = 0;
};

namespace detail {

/// Assignment of rows to columns maximizing sum |c(i, p(i))| over `rows`.
/// Exhaustive for up to 6 columns, greedy above.
inline std::vector<Index> best_assignment(const MatrixXd& c, const std::vector<Index>& rows) {
  const Index n = c.cols();
  std::vector<Index> result(static_cast<std::size_t>(c.rows()), -1);
  if (n <= 6) {
    std::vector<Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), Index{0});
    double best = -1.0;
    do {
      double s = 0.0;
      for (Index r : rows) s += std::abs(c(r, perm[static_cast<std::size_t>(r)]));
      if (s > best) {
        best = s;
        for (Index r : rows) result[static_cast<std::size_t>(r)] = perm[static_cast<std::size_t>(r)];
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return result;
  }
  std::vector<bool> row_done(static_cast<std::size_t>(c.rows()), true);
  for (Index r : rows) row_done[static_cast<std::size_t>(r)] = false;
  std::vector<bool> col_used(static_cast<std::size_t>(n), false);
  for (std::size_t step = 0; step < rows.size(); ++step) {
    double best = -1.0;
    Index br = -1, bc = -1;
    for (Index r : rows) {
      if (row_done[static_cast<std::size_t>(r)]) continue;
      for (Index j = 0; j < n; ++j) {
        if (col_used[static_cast<std::size_t>(j)]) continue;
        if (std::abs(c(r, j)) > best) {
          best = std::abs(c(r, j));
          br = r;
          bc = j;
        }
      }
    }
    result[static_cast<std::size_t>(br)] = bc;
    row_done[static_cast<std::size_t>(br)] = true;
    col_used[static_cast<std::size_t>(bc)] = true;
  }
  return result;
}

}  // namespace detail

/// Numerical stationarity check of a kernel against the mercury-waterfilling
/// structure, with E estimated by Monte Carlo:
///  - left alignment: distance of |U_M^T U_w| from the best permutation matrix
///    (Frobenius, over active modes);
///  - diagonalization: off-diagonal Frobenius norm of V_M^T E V_M over active
///    modes;
///  - mercury: max over active modes of |eta lambda_w,pi(i) - [V_M^T E V_M]_ii|
///    with eta fitted by least squares.
/// Modes with zero singular value are inactive and excluded.
inline KktReport kkt_check(const SensingKernel& kernel, const GmmModel& source, const NoiseModel& noise,
                           Index mc_samples, std::uint64_t seed, unsigned threads = default_thread_count()) {
  detail::require_channel_dims(kernel, source.dim(), noise);
  KktReport rep;
  const Index l = kernel.rows();
  if (l == 0) return rep;
  const MmseMatrix e = mmse_matrix_mc(source, kernel, noise, mc_samples, seed, threads);

  const VectorXd& s = kernel.singular_values();
  std::vector<Index> active;
  for (Index i = 0; i < l; ++i)
    if (s(i) > 1e-8 * std::max(s(0), std::numeric_limits<double>::min())) active.push_back(i);
  rep.active_modes = static_cast<Index>(active.size());
  if (active.empty()) return rep;

  const MatrixXd c = kernel.left_singular_vectors().transpose() * noise.spectrum().eigenvectors();
  rep.noise_mode = detail::best_assignment(c, active);
  double align = 0.0;
  for (Index r : active)
    for (Index j = 0; j < l; ++j) {
      const double target = (j == rep.noise_mode[static_cast<std::size_t>(r)]) ? 1.0 : 0.0;
      align += std::pow(std::abs(c(r, j)) - target, 2);
    }
  rep.left_alignment_residual = std::sqrt(align);

  MatrixXd v(kernel.cols(), static_cast<Index>(active.size()));
  for (std::size_t k = 0; k < active.size(); ++k) v.col(static_cast<Index>(k)) = kernel.right_singular_vectors().col(active[k]);
  const MatrixXd d = v.transpose() * e.matrix * v;
  rep.diagonalization_residual = (d - MatrixXd(d.diagonal().asDiagonal())).norm();

  const VectorXd& lw = noise.spectrum().eigenvalues();
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < active.size(); ++k) {
    const double a = lw(rep.noise_mode[static_cast<std::size_t>(active[k])]);
    num += a * d(static_cast<Index>(k), static_cast<Index>(k));
    den += a * a;
  }
  rep.water_level = num / den;
  for (std::size_t k = 0; k < active.size(); ++k) {
    const double a = lw(rep.noise_mode[static_cast<std::size_t>(active[k])]);
    rep.mercury_residual =
        std::max(rep.mercury_residual, std::abs(rep.water_level * a - d(static_cast<Index>(k), static_cast<Index>(k))));
  }
  return rep;
}

struct AlignmentRow {
  double snr_db = 0.0;
  double mi_aligned = 0.0;
  double mi_identity = 0.0;
};

/// Mutual information for two fixed mode pairings of diagonal source and noise
/// covariances, each with optimal waterfilling power (budget = dimension).
/// SNR scales the noise: Sigma_w = Diag(lambda_w) / 10^(snr_db / 10).
/// "identity" pairs source mode i with noise mode i; "aligned" pairs the
/// strongest source mode with the weakest noise mode, and so on.
inline std::vector<AlignmentRow> compare_alignments(const VectorXd& lambda_x, const VectorXd& lambda_w,
                                                    const std::vector<double>& snr_grid_db) {
  require(lambda_x.size() == lambda_w.size() && lambda_x.size() >= 1, ErrorKind::ShapeError,
          "source and noise spectra must have equal positive length");
  const Index n = lambda_x.size();
  const CovarianceSpectrum source(MatrixXd(lambda_x.asDiagonal()), SpectrumOrder::Descending);

  std::vector<Index> by_source(static_cast<std::size_t>(n)), by_noise(static_cast<std::size_t>(n));
  std::iota(by_source.begin(), by_source.end(), Index{0});
  std::iota(by_noise.begin(), by_noise.end(), Index{0});
  std::stable_sort(by_source.begin(), by_source.end(), [&](Index a, Index b) { return lambda_x(a) > lambda_x(b); });
  std::stable_sort(by_noise.begin(), by_noise.end(), [&](Index a, Index b) { return lambda_w(a) < lambda_w(b); });
  std::vector<Index> aligned(static_cast<std::size_t>(n));  // source mode -> noise axis
  for (Index k = 0; k < n; ++k) aligned[static_cast<std::size_t>(by_source[static_cast<std::size_t>(k)])] = by_noise[static_cast<std::size_t>(k)];
  std::vector<Index> identity(static_cast<std::size_t>(n));
  std::iota(identity.begin(), identity.end(), Index{0});

  auto mi_for = [&](const std::vector<Index>& pairing, double snr) {
    const NoiseModel noise(MatrixXd((lambda_w / snr).asDiagonal()));
    std::vector<double> ratios(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i)
      ratios[static_cast<std::size_t>(i)] = lambda_x(i) > 0.0 ? (lambda_w(pairing[static_cast<std::size_t>(i)]) / snr) / lambda_x(i)
                                                               : std::numeric_limits<double>::infinity();
    const VectorXd power = waterfill_allocation(ratios, static_cast<double>(n));
    MatrixXd m = MatrixXd::Zero(n, n);
    for (Index i = 0; i < n; ++i) m(pairing[static_cast<std::size_t>(i)], i) = std::sqrt(power(i));
    return gaussian_mutual_information(decompose_kernel(m), source, noise);
  };

  std::vector<AlignmentRow> rows;
  rows.reserve(snr_grid_db.size());
  for (double db : snr_grid_db) {
    const double snr = std::pow(10.0, db / 10.0);
    rows.push_back({db, mi_for(aligned, snr), mi_for(identity, snr)});
  }
  return rows;
}

}  // namespace gmmcs
