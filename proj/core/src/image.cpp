#include "imumoco/image.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "imumoco/errors.hpp"

namespace imumoco {

double sample_bilinear_clamped(const Image2D& img, double u, double v) {
  const double umax = static_cast<double>(img.cols) - 1.0;
  const double vmax = static_cast<double>(img.rows) - 1.0;
  u = std::clamp(u, 0.0, umax);
  v = std::clamp(v, 0.0, vmax);
  const auto u0 = static_cast<std::size_t>(u);
  const auto v0 = static_cast<std::size_t>(v);
  const std::size_t u1 = std::min(u0 + 1, img.cols - 1);
  const std::size_t v1 = std::min(v0 + 1, img.rows - 1);
  const double fu = u - static_cast<double>(u0);
  const double fv = v - static_cast<double>(v0);
  const double top = (1.0 - fu) * img.at(v0, u0) + fu * img.at(v0, u1);
  const double bottom = (1.0 - fu) * img.at(v1, u0) + fu * img.at(v1, u1);
  return (1.0 - fv) * top + fv * bottom;
}

Image2D ProjectionStack::image(std::size_t i) const {
  Image2D img(rows, cols);
  const auto src = view(i);
  std::copy(src.begin(), src.end(), img.data.begin());
  return img;
}

void ProjectionStack::set_image(std::size_t i, const Image2D& img) {
  if (img.rows != rows || img.cols != cols) throw ShapeError("image size does not match stack");
  std::copy(img.data.begin(), img.data.end(), view(i).begin());
}

bool VolumeSpec::same_grid(const VolumeSpec& other) const {
  return nx == other.nx && ny == other.ny && nz == other.nz && std::abs(spacing - other.spacing) <= 1e-12 &&
         (origin - other.origin).cwiseAbs().maxCoeff() <= 1e-12;
}

VolumeSpec centered_volume(std::size_t n, double spacing, const Vec3& center) {
  VolumeSpec s;
  s.nx = s.ny = s.nz = n;
  s.spacing = spacing;
  const double half = 0.5 * (static_cast<double>(n) - 1.0) * spacing;
  s.origin = center - Vec3::Constant(half);
  return s;
}

std::string sidecar_path(const std::string& raw_path) {
  std::filesystem::path p(raw_path);
  p.replace_extension(".json");
  return p.string();
}

void write_file_atomic(const std::string& path, const std::string& contents) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot write " + tmp);
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw Error("short write to " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

namespace {

std::string encode_f32(const std::vector<double>& values) {
  std::string bytes(values.size() * 4, '\0');
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(values[i]));
    if constexpr (std::endian::native == std::endian::big)
      bits = ((bits & 0xffu) << 24) | ((bits & 0xff00u) << 8) | ((bits >> 8) & 0xff00u) | (bits >> 24);
    std::memcpy(bytes.data() + 4 * i, &bits, 4);
  }
  return bytes;
}

std::vector<double> decode_f32(const std::string& path, std::size_t count) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() != count * 4)
    throw FormatError(path + ": expected " + std::to_string(count * 4) + " bytes, found " +
                      std::to_string(bytes.size()));
  std::vector<double> values(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, bytes.data() + 4 * i, 4);
    if constexpr (std::endian::native == std::endian::big)
      bits = ((bits & 0xffu) << 24) | ((bits & 0xff00u) << 8) | ((bits >> 8) & 0xff00u) | (bits >> 24);
    values[i] = static_cast<double>(std::bit_cast<float>(bits));
  }
  return values;
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
}

}  // namespace

void save_stack(const ProjectionStack& stack, const std::string& raw_path) {
  write_file_atomic(raw_path, encode_f32(stack.data));
  nlohmann::json side = {
      {"views", stack.views}, {"rows", stack.rows}, {"cols", stack.cols}, {"pixel_mm", stack.pixel_mm}};
  write_file_atomic(sidecar_path(raw_path), side.dump(1) + "\n");
}

ProjectionStack load_stack(const std::string& raw_path) {
  const auto side = read_json(sidecar_path(raw_path));
  try {
    ProjectionStack s(side.at("views").get<std::size_t>(), side.at("rows").get<std::size_t>(),
                      side.at("cols").get<std::size_t>(), side.at("pixel_mm").get<double>());
    s.data = decode_f32(raw_path, s.data.size());
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(sidecar_path(raw_path) + ": " + e.what());
  }
}

void save_volume(const Volume& vol, const std::string& raw_path) {
  write_file_atomic(raw_path, encode_f32(vol.data));
  const auto& s = vol.spec;
  nlohmann::json side = {{"dims", {s.nx, s.ny, s.nz}},
                         {"spacing_mm", s.spacing * 1e3},
                         {"origin_mm", {s.origin.x() * 1e3, s.origin.y() * 1e3, s.origin.z() * 1e3}}};
  write_file_atomic(sidecar_path(raw_path), side.dump(1) + "\n");
}

Volume load_volume(const std::string& raw_path) {
  const auto side = read_json(sidecar_path(raw_path));
  try {
    VolumeSpec s;
    const auto dims = side.at("dims").get<std::vector<std::size_t>>();
    const auto origin = side.at("origin_mm").get<std::vector<double>>();
    if (dims.size() != 3 || origin.size() != 3) throw FormatError("dims/origin_mm need 3 entries");
    s.nx = dims[0];
    s.ny = dims[1];
    s.nz = dims[2];
    s.spacing = side.at("spacing_mm").get<double>() * 1e-3;
    s.origin = Vec3(origin[0], origin[1], origin[2]) * 1e-3;
    Volume v(s);
    v.data = decode_f32(raw_path, s.size());
    return v;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(sidecar_path(raw_path) + ": " + e.what());
  }
}

void save_slice_pgm(const Volume& vol, std::size_t j, const std::string& path) {
  const auto& s = vol.spec;
  if (j >= s.ny) throw std::out_of_range("slice index out of range");
  std::ostringstream out;
  out << "P5\n" << s.nx << ' ' << s.nz << "\n65535\n";
  for (std::size_t k = 0; k < s.nz; ++k) {
    for (std::size_t i = 0; i < s.nx; ++i) {
      const double x = std::clamp(vol.at(i, j, k), 0.0, 1.0);
      const auto value = static_cast<std::uint16_t>(std::lround(x * 65535.0));
      out.put(static_cast<char>(value >> 8));
      out.put(static_cast<char>(value & 0xff));
    }
  }
  write_file_atomic(path, out.str());
}

}  // namespace imumoco
