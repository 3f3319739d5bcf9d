#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "imumoco/types.hpp"

namespace imumoco {

/// Row-major 2D image, (u, v) = (column, row).
struct Image2D {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Image2D() = default;
  Image2D(std::size_t rows_, std::size_t cols_) : rows(rows_), cols(cols_), data(rows_ * cols_, 0.0) {}

  double& at(std::size_t row, std::size_t col) { return data[row * cols + col]; }
  double at(std::size_t row, std::size_t col) const { return data[row * cols + col]; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
};

/// Bilinear sample at (u, v); coordinates are clamped to the image.
double sample_bilinear_clamped(const Image2D& img, double u, double v);

/// View-major stack of equally sized projections.
struct ProjectionStack {
  std::size_t views = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  double pixel_mm = 0.0;
  std::vector<double> data;

  ProjectionStack() = default;
  ProjectionStack(std::size_t views_, std::size_t rows_, std::size_t cols_, double pixel_mm_)
      : views(views_), rows(rows_), cols(cols_), pixel_mm(pixel_mm_), data(views_ * rows_ * cols_, 0.0) {}

  std::size_t view_size() const { return rows * cols; }
  std::span<double> view(std::size_t i) { return {data.data() + i * view_size(), view_size()}; }
  std::span<const double> view(std::size_t i) const { return {data.data() + i * view_size(), view_size()}; }
  Image2D image(std::size_t i) const;
  void set_image(std::size_t i, const Image2D& img);
};

/// Regular grid: voxel (i, j, k) has centre origin + spacing * (i, j, k).
struct VolumeSpec {
  std::size_t nx = 128;
  std::size_t ny = 128;
  std::size_t nz = 128;
  double spacing = 1e-3;  // m
  Vec3 origin = Vec3::Zero();

  std::size_t size() const { return nx * ny * nz; }
  Vec3 voxel_center(std::size_t i, std::size_t j, std::size_t k) const {
    return origin + spacing * Vec3(static_cast<double>(i), static_cast<double>(j), static_cast<double>(k));
  }
  bool same_grid(const VolumeSpec& other) const;
};

/// Grid of n^3 voxels centred on `center`.
VolumeSpec centered_volume(std::size_t n, double spacing, const Vec3& center);

/// Scalar grid, x fastest then y then z.
struct Volume {
  VolumeSpec spec;
  std::vector<double> data;

  Volume() = default;
  explicit Volume(const VolumeSpec& s) : spec(s), data(s.size(), 0.0) {}

  std::size_t index(std::size_t i, std::size_t j, std::size_t k) const { return i + spec.nx * (j + spec.ny * k); }
  double& at(std::size_t i, std::size_t j, std::size_t k) { return data[index(i, j, k)]; }
  double at(std::size_t i, std::size_t j, std::size_t k) const { return data[index(i, j, k)]; }
};

// Raw little-endian float32 payloads with JSON sidecars.
void save_stack(const ProjectionStack& stack, const std::string& raw_path);
ProjectionStack load_stack(const std::string& raw_path);
void save_volume(const Volume& vol, const std::string& raw_path);
Volume load_volume(const std::string& raw_path);

/// Sidecar path for a raw file: foo.raw -> foo.json.
std::string sidecar_path(const std::string& raw_path);

/// 16-bit binary PGM of the y = j slice, window [0, 1].
void save_slice_pgm(const Volume& vol, std::size_t j, const std::string& path);

/// Writes via a temporary file and rename.
void write_file_atomic(const std::string& path, const std::string& contents);

}  // namespace imumoco
