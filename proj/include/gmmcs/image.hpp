#pragma once

// Grayscale images as real matrices (row = image row), binary PGM I/O,
// non-overlapping patch tiling and PSNR.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gmmcs/core_models.hpp"
#include "gmmcs/error.hpp"
#include "gmmcs/random.hpp"

namespace gmmcs {

using Image = MatrixXd;  // height x width, intensities on [0, 255]

namespace detail {

inline void skip_pgm_space(std::istream& in) {
  while (true) {
    const int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (c != EOF && std::isspace(c)) {
      in.get();
    } else {
      return;
    }
  }
}

inline long read_pgm_int(std::istream& in, const std::string& path) {
  skip_pgm_space(in);
  long v = -1;
  in >> v;
  require(static_cast<bool>(in) && v >= 0, ErrorKind::IoError, "malformed PGM header in " + path);
  return v;
}

}  // namespace detail

/// Reads an 8-bit binary PGM (P5).
inline Image read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::IoError, "cannot open " + path.string());
  char magic[2] = {0, 0};
  in.read(magic, 2);
  require(in && magic[0] == 'P' && magic[1] == '5', ErrorKind::IoError, path.string() + " is not a binary PGM");
  const long width = detail::read_pgm_int(in, path.string());
  const long height = detail::read_pgm_int(in, path.string());
  const long maxval = detail::read_pgm_int(in, path.string());
  require(width > 0 && height > 0, ErrorKind::IoError, "empty PGM " + path.string());
  require(maxval > 0 && maxval < 256, ErrorKind::IoError, "only 8-bit PGM is supported: " + path.string());
  in.get();  // single whitespace before the raster
  std::vector<unsigned char> raster(static_cast<std::size_t>(width * height));
  in.read(reinterpret_cast<char*>(raster.data()), static_cast<std::streamsize>(raster.size()));
  require(in.gcount() == static_cast<std::streamsize>(raster.size()), ErrorKind::IoError,
          "truncated PGM raster in " + path.string());
  Image img(height, width);
  for (long r = 0; r < height; ++r)
    for (long c = 0; c < width; ++c)
      img(r, c) = static_cast<double>(raster[static_cast<std::size_t>(r * width + c)]) * 255.0 / static_cast<double>(maxval);
  return img;
}

/// Writes an 8-bit binary PGM; values are rounded and clamped to [0, 255].
inline void write_pgm(const std::filesystem::path& path, const Image& img) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::IoError, "cannot write " + path.string());
  out << "P5\n" << img.cols() << ' ' << img.rows() << "\n255\n";
  std::vector<unsigned char> raster(static_cast<std::size_t>(img.size()));
  for (Index r = 0; r < img.rows(); ++r)
    for (Index c = 0; c < img.cols(); ++c)
      raster[static_cast<std::size_t>(r * img.cols() + c)] =
          static_cast<unsigned char>(std::lround(std::clamp(img(r, c), 0.0, 255.0)));
  out.write(reinterpret_cast<const char*>(raster.data()), static_cast<std::streamsize>(raster.size()));
  require(static_cast<bool>(out), ErrorKind::IoError, "write failed for " + path.string());
}

inline Image clamp_pixels(const Image& img) { return img.cwiseMax(0.0).cwiseMin(255.0); }

/// Non-overlapping tiling. Patches are numbered in raster order over the
/// block grid; within a patch the vector stacks columns (index c * n_rows + r).
struct PatchGrid {
  Index image_rows = 0;
  Index image_cols = 0;
  Index patch_rows = 0;
  Index patch_cols = 0;
  MatrixXd patches;  // J x (patch_rows * patch_cols)

  Index count() const { return patches.rows(); }
  Index blocks_per_row() const { return image_cols / patch_cols; }
};

inline PatchGrid extract_patches(const Image& img, Index patch_rows, Index patch_cols) {
  require(patch_rows > 0 && patch_cols > 0, ErrorKind::InvalidInput, "patch size must be positive");
  require(img.rows() % patch_rows == 0 && img.cols() % patch_cols == 0, ErrorKind::ShapeError,
          "image size is not divisible by the patch size");
  PatchGrid g{img.rows(), img.cols(), patch_rows, patch_cols, {}};
  const Index br = img.rows() / patch_rows;
  const Index bc = img.cols() / patch_cols;
  g.patches.resize(br * bc, patch_rows * patch_cols);
  for (Index i = 0; i < br; ++i)
    for (Index j = 0; j < bc; ++j)
      for (Index c = 0; c < patch_cols; ++c)
        for (Index r = 0; r < patch_rows; ++r)
          g.patches(i * bc + j, c * patch_rows + r) = img(i * patch_rows + r, j * patch_cols + c);
  return g;
}

/// Inverse of extract_patches for a J x m matrix laid out like `grid`.
inline Image reassemble_patches(const PatchGrid& grid, const MatrixXd& patches) {
  const Index bc = grid.blocks_per_row();
  require(patches.rows() == grid.count() && patches.cols() == grid.patch_rows * grid.patch_cols,
          ErrorKind::ShapeError, "patch matrix does not match the grid");
  Image img(grid.image_rows, grid.image_cols);
  for (Index p = 0; p < patches.rows(); ++p) {
    const Index i = p / bc, j = p % bc;
    for (Index c = 0; c < grid.patch_cols; ++c)
      for (Index r = 0; r < grid.patch_rows; ++r)
        img(i * grid.patch_rows + r, j * grid.patch_cols + c) = patches(p, c * grid.patch_rows + r);
  }
  return img;
}

inline Image reassemble_patches(const PatchGrid& grid) { return reassemble_patches(grid, grid.patches); }

inline constexpr double kPsnrIdentical = 99.0;

/// 10 log10(255^2 / MSE); identical images give kPsnrIdentical.
inline double psnr(const Image& reference, const Image& reconstruction) {
  require(reference.rows() == reconstruction.rows() && reference.cols() == reconstruction.cols(),
          ErrorKind::ShapeError, "images differ in size");
  require(reference.size() > 0, ErrorKind::InvalidInput, "empty image");
  const double mse = (reference - reconstruction).squaredNorm() / static_cast<double>(reference.size());
  if (mse == 0.0) return kPsnrIdentical;
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

/// n patches at uniformly random positions (overlap allowed) from a list of
/// images; the image is picked with probability proportional to the number
/// of valid positions. Same vectorization as extract_patches.
inline MatrixXd sample_patches(const std::vector<Image>& images, Index n, Index patch_rows, Index patch_cols,
                               std::uint64_t seed) {
  require(patch_rows > 0 && patch_cols > 0, ErrorKind::InvalidInput, "patch size must be positive");
  std::vector<double> positions;
  for (const auto& img : images) {
    const Index pr = img.rows() - patch_rows + 1, pc = img.cols() - patch_cols + 1;
    positions.push_back(pr > 0 && pc > 0 ? static_cast<double>(pr * pc) : 0.0);
  }
  double total = 0.0;
  for (double p : positions) total += p;
  require(total > 0.0, ErrorKind::InsufficientData, "no image is large enough for one patch");
  Rng rng(seed);
  std::discrete_distribution<std::size_t> pick_image(positions.begin(), positions.end());
  MatrixXd out(n, patch_rows * patch_cols);
  for (Index s = 0; s < n; ++s) {
    const Image& img = images[pick_image(rng)];
    const Index r0 = std::uniform_int_distribution<Index>(0, img.rows() - patch_rows)(rng);
    const Index c0 = std::uniform_int_distribution<Index>(0, img.cols() - patch_cols)(rng);
    for (Index c = 0; c < patch_cols; ++c)
      for (Index r = 0; r < patch_rows; ++r) out(s, c * patch_rows + r) = img(r0 + r, c0 + c);
  }
  return out;
}

/// Sorted *.pgm files of a directory.
inline std::vector<std::filesystem::path> list_pgm_files(const std::filesystem::path& dir) {
  require(std::filesystem::is_directory(dir), ErrorKind::IoError, "not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".pgm") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace gmmcs
