#include "imumoco/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "imumoco/errors.hpp"

namespace imumoco::metrics {

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count_if(data.begin(), data.end(), [](std::uint8_t v) { return v != 0; }));
}

Volume scale_volume(const Volume& v, double lo, double hi) {
  if (!(hi > lo)) throw ConfigError("scaling window must have hi > lo");
  Volume out(v.spec);
  for (std::size_t i = 0; i < v.data.size(); ++i) out.data[i] = std::clamp((v.data[i] - lo) / (hi - lo), 0.0, 1.0);
  return out;
}

namespace {

void check_grid(const VolumeSpec& a, const VolumeSpec& b) {
  if (!a.same_grid(b)) throw ShapeError("volumes are on different grids");
}

/// Separable normalised Gaussian filter along one axis (0 = x, 1 = y, 2 = z).
void filter_axis(std::vector<double>& data, const VolumeSpec& s, int axis, const std::vector<double>& taps) {
  const int r = static_cast<int>(taps.size() / 2);
  const std::size_t dims[3] = {s.nx, s.ny, s.nz};
  const std::size_t stride[3] = {1, s.nx, s.nx * s.ny};
  const std::size_t n = dims[axis];
  const std::size_t st = stride[axis];
  const std::size_t o1 = axis == 0 ? 1 : 0, o2 = axis == 2 ? 1 : 2;
  const std::size_t n1 = dims[o1], n2 = dims[o2];
  const auto lines = static_cast<long>(n1 * n2);
#pragma omp parallel
  {
    std::vector<double> line(n), out(n);
#pragma omp for schedule(static)
    for (long l = 0; l < lines; ++l) {
      const std::size_t a = static_cast<std::size_t>(l) % n1, b = static_cast<std::size_t>(l) / n1;
      const std::size_t base = a * stride[o1] + b * stride[o2];
      for (std::size_t i = 0; i < n; ++i) line[i] = data[base + i * st];
      for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0, wsum = 0.0;
        for (int k = -r; k <= r; ++k) {
          const long j = static_cast<long>(i) + k;
          if (j < 0 || j >= static_cast<long>(n)) continue;
          const double w = taps[static_cast<std::size_t>(k + r)];
          acc += w * line[static_cast<std::size_t>(j)];
          wsum += w;
        }
        out[i] = acc / wsum;
      }
      for (std::size_t i = 0; i < n; ++i) data[base + i * st] = out[i];
    }
  }
}

std::vector<double> blur(std::vector<double> data, const VolumeSpec& s, const std::vector<double>& taps) {
  for (int axis = 0; axis < 3; ++axis) filter_axis(data, s, axis, taps);
  return data;
}

}  // namespace

Volume ssim_map(const Volume& a, const Volume& b, const SsimParams& p) {
  check_grid(a.spec, b.spec);
  std::vector<double> taps(static_cast<std::size_t>(2 * p.radius + 1));
  for (int k = -p.radius; k <= p.radius; ++k)
    taps[static_cast<std::size_t>(k + p.radius)] = std::exp(-0.5 * k * k / (p.sigma * p.sigma));
  const std::size_t n = a.data.size();
  std::vector<double> aa(n), bb(n), ab(n);
  for (std::size_t i = 0; i < n; ++i) {
    aa[i] = a.data[i] * a.data[i];
    bb[i] = b.data[i] * b.data[i];
    ab[i] = a.data[i] * b.data[i];
  }
  const auto mu_a = blur(a.data, a.spec, taps);
  const auto mu_b = blur(b.data, a.spec, taps);
  const auto e_aa = blur(std::move(aa), a.spec, taps);
  const auto e_bb = blur(std::move(bb), a.spec, taps);
  const auto e_ab = blur(std::move(ab), a.spec, taps);
  const double c1 = (p.k1 * p.dynamic_range) * (p.k1 * p.dynamic_range);
  const double c2 = (p.k2 * p.dynamic_range) * (p.k2 * p.dynamic_range);
  Volume out(a.spec);
  for (std::size_t i = 0; i < n; ++i) {
    const double va = e_aa[i] - mu_a[i] * mu_a[i];
    const double vb = e_bb[i] - mu_b[i] * mu_b[i];
    const double cov = e_ab[i] - mu_a[i] * mu_b[i];
    out.data[i] = ((2.0 * mu_a[i] * mu_b[i] + c1) * (2.0 * cov + c2)) /
                  ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2));
  }
  return out;
}

double ssim3d(const Volume& a, const Volume& b, const Mask* mask, const SsimParams& p) {
  check_grid(a.spec, b.spec);
  if (mask) check_grid(a.spec, mask->spec);
  if (a.data == b.data) return 1.0;
  const Volume map = ssim_map(a, b, p);
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < map.data.size(); ++i) {
    if (mask && !mask->data[i]) continue;
    sum += map.data[i];
    ++count;
  }
  if (count == 0) throw ShapeError("empty SSIM mask");
  return sum / static_cast<double>(count);
}

double rmse(const Volume& a, const Volume& b, const Mask* mask) {
  check_grid(a.spec, b.spec);
  if (mask) check_grid(a.spec, mask->spec);
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    if (mask && !mask->data[i]) continue;
    const double d = a.data[i] - b.data[i];
    sum += d * d;
    ++count;
  }
  if (count == 0) throw ShapeError("empty RMSE mask");
  return std::sqrt(sum / static_cast<double>(count));
}

RegionMasks region_masks(const Volume& gt, const moco::Joints& ref) {
  RegionMasks m{Mask(gt.spec), Mask(gt.spec), Mask(gt.spec)};
  const Vec3 n = ((ref.hip - ref.knee).normalized() + (ref.knee - ref.ankle).normalized()).normalized();
  const auto& s = gt.spec;
  for (std::size_t k = 0; k < s.nz; ++k)
    for (std::size_t j = 0; j < s.ny; ++j)
      for (std::size_t i = 0; i < s.nx; ++i) {
        const std::size_t idx = gt.index(i, j, k);
        if (!(gt.data[idx] > 0.0)) continue;
        m.leg.data[idx] = 1;
        if ((s.voxel_center(i, j, k) - ref.knee).dot(n) > 0.0)
          m.thigh.data[idx] = 1;
        else
          m.shank.data[idx] = 1;
      }
  return m;
}

std::vector<MotionComponents> decompose_motion(const moco::MotionSeries& m) {
  std::vector<MotionComponents> out;
  out.reserve(m.size());
  for (const auto& x : m.m) {
    MotionComponents c;
    c.translation_mm = translation_of(x) * 1e3;
    const Vec3 e = euler_xyz(rotation_of(x), &c.gimbal);
    c.euler_deg = Vec3(rad_to_deg(e.x()), rad_to_deg(e.y()), rad_to_deg(e.z()));
    out.push_back(c);
  }
  return out;
}

MotionError motion_rmse(const moco::MotionSeries& ref, const moco::MotionSeries& test) {
  if (ref.size() != test.size()) throw ShapeError("motion series lengths differ");
  if (ref.size() == 0) throw ShapeError("empty motion series");
  const auto a = decompose_motion(ref);
  const auto b = decompose_motion(test);
  Vec3 st = Vec3::Zero(), sr = Vec3::Zero();
  for (std::size_t i = 0; i < a.size(); ++i) {
    st += (a[i].translation_mm - b[i].translation_mm).cwiseAbs2();
    sr += (a[i].euler_deg - b[i].euler_deg).cwiseAbs2();
  }
  const double n = static_cast<double>(a.size());
  MotionError e;
  e.translation_axes_mm = (st / n).cwiseSqrt();
  e.rotation_axes_deg = (sr / n).cwiseSqrt();
  e.translation_mm = e.translation_axes_mm.mean();
  e.rotation_deg = e.rotation_axes_deg.mean();
  return e;
}

}  // namespace imumoco::metrics
