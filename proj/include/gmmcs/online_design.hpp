#pragma once

// Sequential acquisition: each new unit-norm row is designed from the current
// posterior, measured, and folded back in with a rank-one update.

#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "gmmcs/core_models.hpp"
#include "gmmcs/kernel_design.hpp"
#include "gmmcs/posterior.hpp"
#include "gmmcs/random.hpp"

namespace gmmcs {

enum class Strategy { PDS, PV, RENYI, RANDOM };

inline std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::PDS: return "pds";
    case Strategy::PV: return "pv";
    case Strategy::RENYI: return "renyi";
    case Strategy::RANDOM: return "random";
  }
  return "unknown";
}

inline Strategy parse_strategy(std::string_view name) {
  if (name == "pds") return Strategy::PDS;
  if (name == "pv") return Strategy::PV;
  if (name == "renyi") return Strategy::RENYI;
  if (name == "random") return Strategy::RANDOM;
  fail(ErrorKind::InvalidInput, "unknown strategy '" + std::string(name) + "'");
}

struct AcquisitionTrace {
  Strategy strategy = Strategy::PDS;
  std::vector<VectorXd> rows;
  std::vector<double> measurements;
  std::vector<VectorXd> posterior_weights_history;  // after step k
  std::vector<VectorXd> reconstruction_history;     // posterior mean after step k
  std::vector<double> mse_history;                  // ||x - mean||^2 / m after step k

  std::size_t steps() const { return rows.size(); }
};

struct OnlineOptions {
  DesignConfig design;  // PV and RENYI row optimization
  // Original PDS: `random_rows` random rows pick the dominant component once,
  // then the remaining rows walk down that prior component's eigenvectors.
  bool original_pds = false;
  Index random_rows = 2;
  // Posterior components below this weight are dropped before PV/RENYI row
  // design. They still take part in every posterior update.
  double design_weight_floor = 1e-12;
};

namespace detail {

inline VectorXd unit_row(VectorXd r) {
  const double n = r.norm();
  require(n > 0.0 && std::isfinite(n), ErrorKind::DegenerateRow, "designed row is zero");
  r /= n;
  canonicalize_sign(r);
  return r;
}

inline GmmModel design_source(const PosteriorGmm& post, double weight_floor) {
  std::vector<GaussianComponent> comps;
  for (const auto& c : post.components)
    if (c.weight >= weight_floor) comps.push_back(make_component(c.weight, c.mean, c.covariance));
  if (comps.empty()) {
    const auto& c = post.components[dominant_component(post)];
    comps.push_back(make_component(1.0, c.mean, c.covariance));
  }
  return GmmModel::normalized(std::move(comps));
}

inline VectorXd random_row(Rng& rng, Index m) { return standard_normal_vector(rng, m).normalized(); }

}  // namespace detail

/// Leading eigenvector of the dominant posterior component's covariance.
inline VectorXd pds_next_row(const PosteriorGmm& post) {
  require(post.size() > 0, ErrorKind::InvalidInput, "empty posterior");
  const auto& c = post.components[dominant_component(post)];
  const CovarianceSpectrum spec(c.covariance, SpectrumOrder::Descending);
  require(spec.max_eigenvalue() > 0.0, ErrorKind::DegeneratePosterior, "dominant component covariance is zero");
  return detail::unit_row(spec.eigenvectors().col(0));
}

/// One row maximizing I(x; r^T x + w) under the posterior (I-MMSE ascent).
inline VectorXd pv_next_row(const PosteriorGmm& post, double noise_var, const DesignConfig& cfg,
                            double weight_floor = 1e-12) {
  require(noise_var > 0.0, ErrorKind::InvalidInput, "noise variance must be positive");
  const GmmModel source = detail::design_source(post, weight_floor);
  const DesignResult res = design_gradient_ascent_mi(source, NoiseModel::isotropic(1, noise_var), 1, cfg);
  return detail::unit_row(res.kernel.matrix().row(0).transpose());
}

/// One row maximizing h_2 of the scalar measurement under the posterior.
inline VectorXd renyi_next_row(const PosteriorGmm& post, double noise_var, const DesignConfig& cfg,
                               double weight_floor = 1e-12) {
  require(noise_var > 0.0, ErrorKind::InvalidInput, "noise variance must be positive");
  const GmmModel source = detail::design_source(post, weight_floor);
  const DesignResult res = design_gradient_ascent_renyi2(source, NoiseModel::isotropic(1, noise_var), 1, cfg);
  return detail::unit_row(res.kernel.matrix().row(0).transpose());
}

/// Designs, measures and updates `budget` times. Streams: rows of RANDOM come
/// from derive_seed(seed, {0}), measurement noise from derive_seed(seed, {1}),
/// so a shorter budget with the same seed is a prefix of a longer one.
inline AcquisitionTrace run_online_acquisition(const VectorXd& x_true, const GmmModel& prior, double noise_var,
                                               Strategy strategy, Index budget, std::uint64_t seed,
                                               const OnlineOptions& opts = {}) {
  const Index m = prior.dim();
  require(x_true.size() == m, ErrorKind::ShapeError, "signal length does not match prior dimension");
  require(budget >= 0 && budget <= m, ErrorKind::ShapeError, "budget must lie in [0, m]");
  require(noise_var > 0.0, ErrorKind::InvalidInput, "noise variance must be positive");

  AcquisitionTrace trace;
  trace.strategy = strategy;
  Rng row_rng(derive_seed(seed, {0}));
  Rng noise_rng(derive_seed(seed, {1}));
  std::normal_distribution<double> normal(0.0, 1.0);
  const double noise_sd = std::sqrt(noise_var);

  PosteriorGmm post = prior_as_posterior(prior);
  std::size_t locked_component = 0;
  for (Index k = 0; k < budget; ++k) {
    VectorXd row;
    switch (strategy) {
      case Strategy::RANDOM:
        row = detail::random_row(row_rng, m);
        break;
      case Strategy::PDS:
        if (!opts.original_pds) {
          row = pds_next_row(post);
        } else if (k < opts.random_rows) {
          row = detail::random_row(row_rng, m);
        } else {
          if (k == opts.random_rows) locked_component = dominant_component(post);
          const CovarianceSpectrum& spec = prior[locked_component].covariance;
          row = detail::unit_row(spec.eigenvectors().col(k - opts.random_rows));
        }
        break;
      case Strategy::PV:
      case Strategy::RENYI: {
        DesignConfig cfg = opts.design;
        cfg.seed = derive_seed(seed, {2, static_cast<std::uint64_t>(k)});
        row = strategy == Strategy::PV ? pv_next_row(post, noise_var, cfg, opts.design_weight_floor)
                                       : renyi_next_row(post, noise_var, cfg, opts.design_weight_floor);
        break;
      }
    }
    const double y = row.dot(x_true) + noise_sd * normal(noise_rng);
    post = sequential_update(post, row, noise_var, y);

    const VectorXd mean = posterior_mean(post);
    trace.rows.push_back(std::move(row));
    trace.measurements.push_back(y);
    trace.posterior_weights_history.push_back(post.weights());
    trace.mse_history.push_back((x_true - mean).squaredNorm() / static_cast<double>(m));
    trace.reconstruction_history.push_back(mean);
  }
  return trace;
}

/// CSV with header step,strategy,max_weight,dominant_component,mse_so_far.
/// `patch` adds a leading patch column when non-negative.
inline void write_trace_csv_header(std::ostream& os, bool with_patch) {
  if (with_patch) os << "patch,";
  os << "step,strategy,max_weight,dominant_component,mse_so_far\n";
}

inline void write_trace_csv_rows(std::ostream& os, const AcquisitionTrace& trace, long patch = -1) {
  for (std::size_t k = 0; k < trace.steps(); ++k) {
    const VectorXd& w = trace.posterior_weights_history[k];
    Index arg = 0;
    const double wmax = w.maxCoeff(&arg);
    if (patch >= 0) os << patch << ',';
    os << (k + 1) << ',' << to_string(trace.strategy) << ',' << wmax << ',' << arg << ',' << trace.mse_history[k]
       << '\n';
  }
}

}  // namespace gmmcs
