#pragma once

// Patch-based compressive imaging experiment: sense every patch of a test
// image under each strategy and measurement count, reconstruct with the GMM
// posterior mean and score the assembled image by PSNR.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gmmcs/core_models.hpp"
#include "gmmcs/image.hpp"
#include "gmmcs/kernel_design.hpp"
#include "gmmcs/online_design.hpp"
#include "gmmcs/posterior.hpp"
#include "gmmcs/random.hpp"

namespace gmmcs {

/// y = M x + w with w ~ N(0, Sigma_w) drawn from `seed`.
inline VectorXd simulate_measurements(const VectorXd& x, const SensingKernel& kernel, const NoiseModel& noise,
                                      std::uint64_t seed) {
  require(x.size() == kernel.cols(), ErrorKind::ShapeError, "signal length does not match kernel columns");
  require(noise.dim() == kernel.rows(), ErrorKind::ShapeError, "noise dimension does not match kernel rows");
  if (kernel.rows() == 0) return VectorXd(0);
  Rng rng(seed);
  return kernel.matrix() * x + noise.spectrum().sqrt_factor() * standard_normal_vector(rng, kernel.rows());
}

/// Posterior mean of x given y; the prior mean when there are no measurements.
inline VectorXd reconstruct_patch(const VectorXd& y, const SensingKernel& kernel, const NoiseModel& noise,
                                  const GmmModel& prior) {
  require(kernel.cols() == prior.dim(), ErrorKind::ShapeError, "kernel columns do not match prior dimension");
  if (kernel.rows() == 0) return prior.mixture_mean();
  return GmmConditioner(prior, kernel, noise).posterior_mean(y);
}

/// Offline designs share one kernel across all patches; online ones design
/// rows per patch.
enum class ExperimentStrategy { PDS, PV, RENYI, RANDOM, OFFLINE_WATERFILL, OFFLINE_MI, OFFLINE_RENYI };

inline std::string to_string(ExperimentStrategy s) {
  switch (s) {
    case ExperimentStrategy::PDS: return "pds";
    case ExperimentStrategy::PV: return "pv";
    case ExperimentStrategy::RENYI: return "renyi";
    case ExperimentStrategy::RANDOM: return "random";
    case ExperimentStrategy::OFFLINE_WATERFILL: return "offline-waterfill";
    case ExperimentStrategy::OFFLINE_MI: return "offline-mi";
    case ExperimentStrategy::OFFLINE_RENYI: return "offline-renyi";
  }
  return "unknown";
}

inline ExperimentStrategy parse_experiment_strategy(const std::string& name) {
  for (auto s : {ExperimentStrategy::PDS, ExperimentStrategy::PV, ExperimentStrategy::RENYI, ExperimentStrategy::RANDOM,
                 ExperimentStrategy::OFFLINE_WATERFILL, ExperimentStrategy::OFFLINE_MI,
                 ExperimentStrategy::OFFLINE_RENYI})
    if (to_string(s) == name) return s;
  fail(ErrorKind::InvalidInput, "unknown strategy '" + name + "'");
}

inline bool is_online(ExperimentStrategy s) {
  return s == ExperimentStrategy::PDS || s == ExperimentStrategy::PV || s == ExperimentStrategy::RENYI ||
         s == ExperimentStrategy::RANDOM;
}

inline Strategy online_strategy(ExperimentStrategy s) {
  switch (s) {
    case ExperimentStrategy::PDS: return Strategy::PDS;
    case ExperimentStrategy::PV: return Strategy::PV;
    case ExperimentStrategy::RENYI: return Strategy::RENYI;
    case ExperimentStrategy::RANDOM: return Strategy::RANDOM;
    default: fail(ErrorKind::InvalidInput, to_string(s) + " is not an online strategy");
  }
}

struct ExperimentConfig {
  Image test_image;
  GmmModel prior;
  std::vector<ExperimentStrategy> strategies{ExperimentStrategy::PDS, ExperimentStrategy::RANDOM};
  std::vector<Index> l_grid;
  double noise_var = 1e-6;
  std::uint64_t seed = 0;
  Index patch_rows = 8;
  Index patch_cols = 8;
  unsigned threads = default_thread_count();
  OnlineOptions online;
  DesignConfig offline;
  bool keep_traces = false;
};

struct ExperimentRecord {
  ExperimentStrategy strategy = ExperimentStrategy::RANDOM;
  Index measurements_per_patch = 0;
  double psnr_db = 0.0;
  std::uint64_t seed = 0;
  double wall_time_s = 0.0;  // elapsed time of the strategy run that produced this row
  Image reconstruction;      // clamped to [0, 255]
};

struct ExperimentOutput {
  std::vector<ExperimentRecord> records;
  std::map<ExperimentStrategy, std::vector<AcquisitionTrace>> traces;  // online strategies, keep_traces only
};

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline SensingKernel offline_kernel(ExperimentStrategy s, const GmmModel& prior, const NoiseModel& noise, Index l,
                                    DesignConfig cfg, std::uint64_t seed) {
  cfg.seed = seed;
  switch (s) {
    case ExperimentStrategy::OFFLINE_WATERFILL:
      return design_gaussian_waterfilling(CovarianceSpectrum(prior.mixture_covariance(), SpectrumOrder::Descending),
                                          noise, l);
    case ExperimentStrategy::OFFLINE_MI: return design_gradient_ascent_mi(prior, noise, l, cfg).kernel;
    case ExperimentStrategy::OFFLINE_RENYI: return design_gradient_ascent_renyi2(prior, noise, l, cfg).kernel;
    default: fail(ErrorKind::InvalidInput, to_string(s) + " is not an offline strategy");
  }
}

}  // namespace detail

/// Runs every strategy at every l in the grid. Patch j uses the streams of
/// derive_seed(seed, {j}) under every strategy, so strategies see the same
/// measurement noise. Online strategies acquire max(l_grid) rows once per
/// patch and read the reconstruction at each l from the trace.
inline ExperimentOutput run_experiment(const ExperimentConfig& cfg) {
  require(!cfg.l_grid.empty() && !cfg.strategies.empty(), ErrorKind::InvalidInput,
          "need at least one strategy and one measurement count");
  require(cfg.noise_var > 0.0, ErrorKind::InvalidInput, "noise variance must be positive");
  const PatchGrid grid = extract_patches(cfg.test_image, cfg.patch_rows, cfg.patch_cols);
  const Index m = grid.patches.cols();
  require(cfg.prior.dim() == m, ErrorKind::ShapeError, "prior dimension does not match the patch size");
  for (Index l : cfg.l_grid) require(l >= 0 && l <= m, ErrorKind::ShapeError, "measurement count outside [0, m]");
  const Index l_max = *std::max_element(cfg.l_grid.begin(), cfg.l_grid.end());
  const Index patches = grid.count();
  const auto patch_seed = [&](Index j) { return derive_seed(cfg.seed, {static_cast<std::uint64_t>(j)}); };

  auto assemble = [&](const MatrixXd& recon) { return clamp_pixels(reassemble_patches(grid, recon)); };

  ExperimentOutput out;
  for (std::size_t si = 0; si < cfg.strategies.size(); ++si) {
    const ExperimentStrategy s = cfg.strategies[si];
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<ExperimentRecord> rows;
    if (is_online(s)) {
      std::vector<AcquisitionTrace> traces(static_cast<std::size_t>(patches));
      parallel_for(static_cast<std::size_t>(patches), cfg.threads, [&](std::size_t j) {
        const VectorXd x = grid.patches.row(static_cast<Index>(j)).transpose();
        traces[j] = run_online_acquisition(x, cfg.prior, cfg.noise_var, online_strategy(s), l_max,
                                           patch_seed(static_cast<Index>(j)), cfg.online);
      });
      const VectorXd prior_mean = cfg.prior.mixture_mean();
      for (Index l : cfg.l_grid) {
        MatrixXd recon(patches, m);
        for (Index j = 0; j < patches; ++j)
          recon.row(j) = (l == 0 ? prior_mean : traces[static_cast<std::size_t>(j)].reconstruction_history[static_cast<std::size_t>(l - 1)]).transpose();
        ExperimentRecord rec{s, l, 0.0, cfg.seed, 0.0, assemble(recon)};
        rec.psnr_db = psnr(cfg.test_image, rec.reconstruction);
        rows.push_back(std::move(rec));
      }
      if (cfg.keep_traces) out.traces[s] = std::move(traces);
    } else {
      for (Index l : cfg.l_grid) {
        const NoiseModel noise = NoiseModel::isotropic(l, cfg.noise_var);
        MatrixXd recon(patches, m);
        if (l == 0) {
          recon.rowwise() = cfg.prior.mixture_mean().transpose();
        } else {
          const SensingKernel kernel = detail::offline_kernel(
              s, cfg.prior, noise, l, cfg.offline, derive_seed(cfg.seed, {0xde5, static_cast<std::uint64_t>(l)}));
          const GmmConditioner cond(cfg.prior, kernel, noise);
          parallel_for(static_cast<std::size_t>(patches), cfg.threads, [&](std::size_t j) {
            const VectorXd x = grid.patches.row(static_cast<Index>(j)).transpose();
            // Same noise stream as the online acquisitions of this patch.
            const VectorXd y = simulate_measurements(x, kernel, noise, derive_seed(patch_seed(static_cast<Index>(j)), {1}));
            recon.row(static_cast<Index>(j)) = cond.posterior_mean(y).transpose();
          });
        }
        ExperimentRecord rec{s, l, 0.0, cfg.seed, 0.0, assemble(recon)};
        rec.psnr_db = psnr(cfg.test_image, rec.reconstruction);
        rows.push_back(std::move(rec));
      }
    }
    const double elapsed = detail::seconds_since(t0);
    for (auto& r : rows) {
      r.wall_time_s = elapsed;
      out.records.push_back(std::move(r));
    }
  }
  return out;
}

/// Fixed-format number for CSV output; independent of the global locale.
inline std::string csv_number(double v, int precision = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  for (char* p = buf; *p; ++p)
    if (*p == ',') *p = '.';
  return buf;
}

inline void write_curves_csv(std::ostream& os, const std::vector<ExperimentRecord>& records,
                             bool with_wall_time = true) {
  os << "strategy,l,psnr_db,seed" << (with_wall_time ? ",wall_time_s" : "") << '\n';
  for (const auto& r : records) {
    os << to_string(r.strategy) << ',' << r.measurements_per_patch << ',' << csv_number(r.psnr_db) << ',' << r.seed;
    if (with_wall_time) os << ',' << csv_number(r.wall_time_s, 3);
    os << '\n';
  }
}

}  // namespace gmmcs
