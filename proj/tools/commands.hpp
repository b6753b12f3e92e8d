#pragma once

// Subcommands of the gmmcs binary. run_cli is callable in-process so tests can
// drive the same code path as the executable.

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gmmcs/gmmcs.hpp"

namespace gmmcs::cli {

inline constexpr const char* kToolVersion = "0.1.0";

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumeric = 3;

/// FNV-1a over everything that affects a command's outputs.
class Digest {
 public:
  Digest& add(std::string_view s) {
    for (unsigned char c : s) {
      h_ ^= c;
      h_ *= 0x100000001b3ULL;
    }
    h_ ^= 0xff;  // field separator
    h_ *= 0x100000001b3ULL;
    return *this;
  }
  Digest& add(const std::string& key, const std::string& value) { return add(key).add(value); }
  Digest& add_file(const std::filesystem::path& p) { return add(p.filename().string()).add(read_text_file(p)); }

  std::string hex() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h_));
    return buf;
  }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

inline std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct Manifest {
  std::string command;
  Digest digest{};
  std::uint64_t seed = 0;
  Json config = Json::object();
  std::string started = utc_now();

  void set(const std::string& key, const Json& value) {
    config[key] = value;
    digest.add(key, value.dump());
  }

  void write(const std::filesystem::path& primary_output) const {
    Json j;
    j["command"] = command;
    j["config_digest"] = digest.hex();
    j["seed"] = seed;
    j["tool_version"] = kToolVersion;
    j["config"] = config;
    j["started_utc"] = started;
    j["finished_utc"] = utc_now();
    write_text_file(primary_output.string() + ".manifest.json", j.dump(1) + "\n");
  }
};

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

struct GlobalOptions {
  unsigned threads = default_thread_count();
};

struct TrainOptions {
  std::string patches_dir;
  Index components = 20;
  std::string out;
  std::uint64_t seed = 0;
  double reg = 0.1;
  Index num_patches = 20000;
  Index patch_size = 8;
  int max_iters = 500;
};

inline int cmd_train(const TrainOptions& o, std::ostream& /*out*/, std::ostream& log) {
  const auto files = list_pgm_files(o.patches_dir);
  require(!files.empty(), ErrorKind::InsufficientData, "no .pgm files in " + o.patches_dir);
  Manifest man{"train"};
  man.seed = o.seed;
  std::vector<Image> images;
  for (const auto& f : files) {
    images.push_back(read_pgm(f));
    man.digest.add_file(f);
  }
  man.set("components", o.components);
  man.set("reg", o.reg);
  man.set("seed", o.seed);
  man.set("num_patches", o.num_patches);
  man.set("patch_size", o.patch_size);
  man.set("max_iters", o.max_iters);
  man.set("images", static_cast<Index>(files.size()));

  const MatrixXd patches = sample_patches(images, o.num_patches, o.patch_size, o.patch_size, derive_seed(o.seed, {0}));
  EmOptions em;
  em.max_iters = o.max_iters;
  const EmResult res = train_gmm_em(patches, o.components, derive_seed(o.seed, {1}), o.reg, em);
  log << "em: " << res.iterations << " iterations, mean log-likelihood " << format_double(res.log_likelihood.back())
      << (res.converged ? "" : " (iteration limit)") << '\n';
  save_gmm(o.out, res.model);
  man.write(o.out);
  return kExitOk;
}

struct DesignOptions {
  std::string model;
  double noise_var = 1e-6;
  Index rows = 8;
  std::string method = "waterfill";
  std::string out;
  std::uint64_t seed = 0;
  Index mc_samples = 20000;
  int restarts = 5;
  int max_iters = 200;
};

/// Kernel for one method. Waterfilling on a mixture uses its total covariance.
inline SensingKernel design_kernel(const GmmModel& model, const NoiseModel& noise, const DesignOptions& o,
                                   unsigned threads) {
  DesignConfig cfg;
  cfg.seed = o.seed;
  cfg.mc_samples = o.mc_samples;
  cfg.restarts = o.restarts;
  cfg.max_iters = o.max_iters;
  cfg.threads = threads;
  if (o.method == "waterfill") {
    const CovarianceSpectrum cov = model.size() == 1
                                       ? model[0].covariance
                                       : CovarianceSpectrum(model.mixture_covariance(), SpectrumOrder::Descending);
    return design_gaussian_waterfilling(cov, noise, o.rows);
  }
  if (o.method == "pv") return design_gradient_ascent_mi(model, noise, o.rows, cfg).kernel;
  if (o.method == "renyi") return design_gradient_ascent_renyi2(model, noise, o.rows, cfg).kernel;
  if (o.method == "random") return random_kernel(o.rows, model.dim(), o.seed);
  fail(ErrorKind::InvalidInput, "unknown method '" + o.method + "'");
}

inline int cmd_design(const DesignOptions& o, unsigned threads, std::ostream& out, std::ostream& /*log*/) {
  require(o.method == "waterfill" || o.method == "pv" || o.method == "renyi" || o.method == "random",
          ErrorKind::InvalidInput, "unknown method '" + o.method + "'");
  require(o.noise_var > 0.0, ErrorKind::InvalidInput, "noise variance must be positive");
  const GmmModel model = load_gmm(o.model);
  require(o.rows >= 1 && o.rows <= model.dim(), ErrorKind::ShapeError, "rows must lie in [1, dim]");
  const NoiseModel noise = NoiseModel::isotropic(o.rows, o.noise_var);

  Manifest man{"design"};
  man.seed = o.seed;
  man.digest.add_file(o.model);
  man.set("noise_var", o.noise_var);
  man.set("rows", o.rows);
  man.set("method", o.method);
  man.set("seed", o.seed);
  man.set("mc_samples", o.mc_samples);
  man.set("restarts", o.restarts);
  man.set("max_iters", o.max_iters);

  const SensingKernel kernel = design_kernel(model, noise, o, threads);
  save_kernel(o.out, kernel);
  man.write(o.out);

  const double mi = model.size() == 1
                        ? gaussian_mutual_information(kernel, model[0].covariance, noise)
                        : mutual_information_mc(model, kernel, noise, o.mc_samples, derive_seed(o.seed, {0xe5a1}), threads)
                              .value;
  const double h2 = renyi2_entropy_gmm(model, kernel, noise);
  out << "method,rows,mi_nats,h2_nats\n"
      << o.method << ',' << o.rows << ',' << csv_number(mi, 9) << ',' << csv_number(h2, 9) << '\n';
  return kExitOk;
}

struct SweepOptions {
  std::string image;
  std::string model;
  std::vector<std::string> strategies{"pds", "random"};
  std::vector<Index> l_grid{2, 4, 6, 8, 10, 12, 14, 16, 18, 20};
  double noise_var = 1e-6;
  std::uint64_t seed = 0;
  std::string out;
  std::string recon_dir;  // defaults to the directory of `out`
  std::string trace;      // optional per-step trace CSV of the online strategies
  Index patch_size = 8;
};

inline int cmd_sweep(const SweepOptions& o, unsigned threads, std::ostream& /*out*/, std::ostream& log) {
  ExperimentConfig cfg;
  cfg.test_image = read_pgm(o.image);
  cfg.prior = load_gmm(o.model);
  cfg.strategies.clear();
  for (const auto& s : o.strategies) cfg.strategies.push_back(parse_experiment_strategy(s));
  cfg.l_grid = o.l_grid;
  cfg.noise_var = o.noise_var;
  cfg.seed = o.seed;
  cfg.patch_rows = cfg.patch_cols = o.patch_size;
  cfg.threads = threads;
  cfg.keep_traces = !o.trace.empty();

  Manifest man{"sweep"};
  man.seed = o.seed;
  man.digest.add_file(o.image).add_file(o.model);
  man.set("strategies", o.strategies);
  man.set("l_grid", o.l_grid);
  man.set("noise_var", o.noise_var);
  man.set("seed", o.seed);
  man.set("patch_size", o.patch_size);

  const ExperimentOutput res = run_experiment(cfg);

  std::ofstream csv(o.out, std::ios::binary);
  require(static_cast<bool>(csv), ErrorKind::IoError, "cannot write " + o.out);
  csv.imbue(std::locale::classic());
  write_curves_csv(csv, res.records);
  csv.close();

  const std::filesystem::path out_path(o.out);
  const std::filesystem::path dir =
      o.recon_dir.empty() ? (out_path.has_parent_path() ? out_path.parent_path() : ".") : std::filesystem::path(o.recon_dir);
  std::filesystem::create_directories(dir);
  const Index l_max = *std::max_element(o.l_grid.begin(), o.l_grid.end());
  for (const auto& r : res.records) {
    if (r.measurements_per_patch != l_max) continue;
    const auto p = dir / (out_path.stem().string() + "_" + to_string(r.strategy) + "_l" + std::to_string(l_max) + ".pgm");
    write_pgm(p, r.reconstruction);
    log << to_string(r.strategy) << " l=" << l_max << " psnr " << csv_number(r.psnr_db, 2) << " dB -> " << p.string()
        << '\n';
  }
  if (!o.trace.empty()) {
    std::ofstream tr(o.trace, std::ios::binary);
    require(static_cast<bool>(tr), ErrorKind::IoError, "cannot write " + o.trace);
    tr.imbue(std::locale::classic());
    write_trace_csv_header(tr, true);
    for (const auto& [s, traces] : res.traces)
      for (std::size_t j = 0; j < traces.size(); ++j) write_trace_csv_rows(tr, traces[j], static_cast<long>(j));
  }
  man.write(o.out);
  return kExitOk;
}

/// Grid of the alignment demo: -10..30 dB in 1 dB steps.
inline std::vector<double> align_demo_grid() {
  std::vector<double> g;
  for (int db = -10; db <= 30; ++db) g.push_back(db);
  return g;
}

inline void write_alignment_csv(std::ostream& os, const std::vector<AlignmentRow>& rows) {
  os << "snr_db,mi_aligned_nats,mi_identity_nats\n";
  for (const auto& r : rows)
    os << csv_number(r.snr_db, 1) << ',' << csv_number(r.mi_aligned, 12) << ',' << csv_number(r.mi_identity, 12) << '\n';
}

inline int cmd_align_demo(const std::string& out_path, std::ostream& /*out*/, std::ostream& /*log*/) {
  VectorXd lx(2), lw(2);
  lx << 1.0, 0.25;
  lw << 1.0, 0.25;
  const auto rows = compare_alignments(lx, lw, align_demo_grid());
  std::ostringstream ss;
  ss.imbue(std::locale::classic());
  write_alignment_csv(ss, rows);
  write_text_file(out_path, ss.str());
  Manifest man{"align-demo"};
  man.set("snr_grid_db", align_demo_grid());
  man.write(out_path);
  return kExitOk;
}

inline int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidInput:
    case ErrorKind::ShapeError:
    case ErrorKind::InsufficientData:
    case ErrorKind::IoError: return kExitUsage;
    default: return kExitNumeric;
  }
}

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"GMM compressive sensing: kernel design, online acquisition and reconstruction experiments"};
  app.require_subcommand(1);
  GlobalOptions g;
  app.add_option("--threads", g.threads, "worker threads")->check(CLI::PositiveNumber);

  TrainOptions train;
  auto* c_train = app.add_subcommand("train", "fit a GMM prior to image patches with EM");
  c_train->add_option("--patches-dir", train.patches_dir, "directory of 8-bit PGM training images")->required();
  c_train->add_option("--components", train.components, "number of mixture components")->check(CLI::PositiveNumber);
  c_train->add_option("--out", train.out, "output model file (JSON)")->required();
  c_train->add_option("--seed", train.seed);
  c_train->add_option("--reg", train.reg, "covariance regularization added each M-step")->check(CLI::PositiveNumber);
  c_train->add_option("--num-patches", train.num_patches, "random training patches")->check(CLI::PositiveNumber);
  c_train->add_option("--patch-size", train.patch_size)->check(CLI::PositiveNumber);
  c_train->add_option("--max-iters", train.max_iters)->check(CLI::PositiveNumber);

  DesignOptions design;
  auto* c_design = app.add_subcommand("design", "design an offline kernel for a model");
  c_design->add_option("--model", design.model)->required();
  c_design->add_option("--noise-var", design.noise_var);
  c_design->add_option("--rows", design.rows)->required();
  c_design->add_option("--method", design.method, "waterfill|pv|renyi|random");
  c_design->add_option("--out", design.out, "output kernel file (JSON)")->required();
  c_design->add_option("--seed", design.seed);
  c_design->add_option("--mc-samples", design.mc_samples)->check(CLI::PositiveNumber);
  c_design->add_option("--restarts", design.restarts)->check(CLI::PositiveNumber);
  c_design->add_option("--max-iters", design.max_iters)->check(CLI::PositiveNumber);

  SweepOptions sweep;
  auto* c_sweep = app.add_subcommand("sweep", "PSNR curves over strategies and measurement counts");
  c_sweep->add_option("--image", sweep.image)->required();
  c_sweep->add_option("--model", sweep.model)->required();
  c_sweep->add_option("--strategies", sweep.strategies, "comma list of pds,pv,renyi,random,offline-*")->delimiter(',');
  c_sweep->add_option("--l-grid", sweep.l_grid, "comma list of measurements per patch")->delimiter(',');
  c_sweep->add_option("--noise-var", sweep.noise_var);
  c_sweep->add_option("--seed", sweep.seed);
  c_sweep->add_option("--out", sweep.out, "curves CSV")->required();
  c_sweep->add_option("--recon-dir", sweep.recon_dir, "where reconstructed PGMs go");
  c_sweep->add_option("--trace", sweep.trace, "per-step trace CSV for online strategies");
  c_sweep->add_option("--patch-size", sweep.patch_size)->check(CLI::PositiveNumber);

  std::string align_out;
  auto* c_align = app.add_subcommand("align-demo", "MI of aligned vs identity mode pairing over SNR");
  c_align->add_option("--out", align_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*c_train) return cmd_train(train, out, err);
    if (*c_design) return cmd_design(design, g.threads, out, err);
    if (*c_sweep) return cmd_sweep(sweep, g.threads, out, err);
    if (*c_align) return cmd_align_demo(align_out, out, err);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumeric;
  }
  return kExitUsage;
}

}  // namespace gmmcs::cli
