#pragma once

// JSON files for mixtures, kernels and posteriors. Doubles are written in
// shortest round-trip form, so parse(serialize(x)) == x bit for bit.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gmmcs/core_models.hpp"
#include "gmmcs/posterior.hpp"

namespace gmmcs {

using Json = nlohmann::ordered_json;

namespace detail {

inline Json vector_json(const VectorXd& v) { return Json(std::vector<double>(v.data(), v.data() + v.size())); }

inline Json matrix_json(const MatrixXd& a) {
  Json rows = Json::array();
  for (Index r = 0; r < a.rows(); ++r) rows.push_back(vector_json(a.row(r).transpose()));
  return rows;
}

inline VectorXd json_vector(const Json& j, Index n, const char* what) {
  require(j.is_array() && static_cast<Index>(j.size()) == n, ErrorKind::ShapeError, std::string(what) + " has wrong length");
  VectorXd v(n);
  for (Index i = 0; i < n; ++i) v(i) = j[static_cast<std::size_t>(i)].get<double>();
  return v;
}

inline MatrixXd json_matrix(const Json& j, Index rows, Index cols, const char* what) {
  require(j.is_array() && static_cast<Index>(j.size()) == rows, ErrorKind::ShapeError, std::string(what) + " has wrong row count");
  MatrixXd a(rows, cols);
  for (Index r = 0; r < rows; ++r) a.row(r) = json_vector(j[static_cast<std::size_t>(r)], cols, what).transpose();
  return a;
}

template <typename F>
auto parse_guarded(F&& f) {
  try {
    return f();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::InvalidInput, std::string("malformed model file: ") + e.what());
  }
}

}  // namespace detail

inline Json gmm_to_json(const GmmModel& model) {
  Json j;
  j["dim"] = model.dim();
  j["K"] = model.size();
  Json comps = Json::array();
  for (const auto& c : model.components())
    comps.push_back({{"weight", c.weight}, {"mean", detail::vector_json(c.mean)},
                     {"covariance", detail::matrix_json(c.covariance.matrix())}});
  j["components"] = std::move(comps);
  return j;
}

inline GmmModel gmm_from_json(const Json& j) {
  return detail::parse_guarded([&] {
    const Index dim = j.at("dim").get<Index>();
    const std::size_t k = j.at("K").get<std::size_t>();
    const Json& comps = j.at("components");
    require(comps.is_array() && comps.size() == k, ErrorKind::ShapeError, "component count does not match K");
    std::vector<GaussianComponent> out;
    for (const auto& c : comps)
      out.push_back(make_component(c.at("weight").get<double>(), detail::json_vector(c.at("mean"), dim, "mean"),
                                   detail::json_matrix(c.at("covariance"), dim, dim, "covariance")));
    return GmmModel(std::move(out));
  });
}

inline Json kernel_to_json(const SensingKernel& kernel) {
  const MatrixXd& a = kernel.matrix();
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(a.size()));
  for (Index r = 0; r < a.rows(); ++r)
    for (Index c = 0; c < a.cols(); ++c) data.push_back(a(r, c));
  Json j;
  j["rows"] = a.rows();
  j["cols"] = a.cols();
  j["data"] = std::move(data);
  return j;
}

inline SensingKernel kernel_from_json(const Json& j) {
  return detail::parse_guarded([&] {
    const Index rows = j.at("rows").get<Index>();
    const Index cols = j.at("cols").get<Index>();
    const auto data = j.at("data").get<std::vector<double>>();
    require(rows >= 0 && cols >= 0 && static_cast<Index>(data.size()) == rows * cols, ErrorKind::ShapeError,
            "kernel data length does not match rows * cols");
    MatrixXd a(rows, cols);
    for (Index r = 0; r < rows; ++r)
      for (Index c = 0; c < cols; ++c) a(r, c) = data[static_cast<std::size_t>(r * cols + c)];
    return decompose_kernel(a);
  });
}

/// Mixture schema plus evidence_log and k (measurements absorbed).
inline Json posterior_to_json(const PosteriorGmm& post) {
  Json j;
  j["dim"] = post.dim();
  j["K"] = post.size();
  Json comps = Json::array();
  for (const auto& c : post.components)
    comps.push_back({{"weight", c.weight}, {"mean", detail::vector_json(c.mean)},
                     {"covariance", detail::matrix_json(c.covariance)}});
  j["components"] = std::move(comps);
  j["evidence_log"] = post.evidence_log;
  j["k"] = post.measurement_count;
  return j;
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::IoError, "cannot write " + path.string());
  out << text;
  require(static_cast<bool>(out), ErrorKind::IoError, "write failed for " + path.string());
}

inline Json read_json_file(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::InvalidInput, path.string() + " is not valid JSON: " + e.what());
  }
}

inline void save_gmm(const std::filesystem::path& path, const GmmModel& model) {
  write_text_file(path, gmm_to_json(model).dump(1) + "\n");
}

inline GmmModel load_gmm(const std::filesystem::path& path) { return gmm_from_json(read_json_file(path)); }

inline void save_kernel(const std::filesystem::path& path, const SensingKernel& kernel) {
  write_text_file(path, kernel_to_json(kernel).dump(1) + "\n");
}

inline SensingKernel load_kernel(const std::filesystem::path& path) { return kernel_from_json(read_json_file(path)); }

}  // namespace gmmcs
