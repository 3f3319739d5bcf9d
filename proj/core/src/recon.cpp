#include "imumoco/recon.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>

#include "imumoco/errors.hpp"

namespace imumoco::recon {

double shepp_logan_tap(long n, double tau) {
  const double nn = static_cast<double>(n);
  return -2.0 / (kPi * kPi * tau * (4.0 * nn * nn - 1.0));
}

double parker_weight(double beta, double gamma, double delta) {
  if (beta < 0.0 || beta > kPi + 2.0 * delta) return 0.0;
  if (beta < 2.0 * delta - 2.0 * gamma) {
    const double s = std::sin(0.25 * kPi * beta / (delta - gamma));
    return s * s;
  }
  if (beta <= kPi - 2.0 * gamma) return 1.0;
  const double s = std::sin(0.25 * kPi * (kPi + 2.0 * delta - beta) / (delta + gamma));
  return s * s;
}

double parker_delta(const geometry::ScanGeometry& geom) {
  const double delta = 0.5 * (geom.total_arc() - kPi);
  if (delta < 0.5 * geom.fan_angle())
    throw ShortScanError("scanned arc " + std::to_string(rad_to_deg(geom.total_arc())) + " deg is shorter than " +
                         std::to_string(rad_to_deg(kPi + geom.fan_angle())) + " deg");
  return delta;
}

namespace {

// The FFTW planner is not thread-safe; execution with new-array calls is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

struct FftBuffers {
  double* real = nullptr;
  fftw_complex* spec = nullptr;
  explicit FftBuffers(std::size_t n) {
    real = fftw_alloc_real(n);
    spec = fftw_alloc_complex(n / 2 + 1);
  }
  ~FftBuffers() {
    fftw_free(real);
    fftw_free(spec);
  }
  FftBuffers(const FftBuffers&) = delete;
  FftBuffers& operator=(const FftBuffers&) = delete;
};

}  // namespace

ProjectionStack preweight_and_filter(const ProjectionStack& stack, const geometry::ScanGeometry& geom,
                                     const FilterConfig& cfg) {
  if (stack.views != geom.n_proj || stack.rows != geom.det_rows || stack.cols != geom.det_cols)
    throw ShapeError("projection stack does not match geometry");
  const std::size_t cols = stack.cols, rows = stack.rows;
  const std::size_t pad = cfg.padding < 0 ? cols / 2 : static_cast<std::size_t>(cfg.padding);
  const std::size_t padded = cols + 2 * pad;
  const std::size_t len = next_pow2(2 * padded);
  const double tau = geom.pixel * geom.sid / geom.sdd;  // spacing at the isocentre
  const double delta = cfg.parker ? parker_delta(geom) : 0.0;

  // Kernel spectrum (real and even).
  std::vector<double> kernel_hat(len / 2 + 1);
  fftw_plan forward, backward;
  {
    FftBuffers buf(len);
    std::lock_guard<std::mutex> lock(planner_mutex());
    forward = fftw_plan_dft_r2c_1d(static_cast<int>(len), buf.real, buf.spec, FFTW_ESTIMATE);
    backward = fftw_plan_dft_c2r_1d(static_cast<int>(len), buf.spec, buf.real, FFTW_ESTIMATE);
    for (std::size_t k = 0; k < len; ++k) {
      const long n = k <= len / 2 ? static_cast<long>(k) : static_cast<long>(k) - static_cast<long>(len);
      buf.real[k] = shepp_logan_tap(n, tau);
    }
    fftw_execute_dft_r2c(forward, buf.real, buf.spec);
    for (std::size_t k = 0; k < kernel_hat.size(); ++k) kernel_hat[k] = buf.spec[k][0] / static_cast<double>(len);
  }

  // Detector weights shared by all views.
  std::vector<double> cosine(rows * cols, 1.0);
  std::vector<double> gamma(cols, 0.0);
  for (std::size_t c = 0; c < cols; ++c) {
    const double u = (static_cast<double>(c) - geom.center_u()) * geom.pixel;
    gamma[c] = -std::atan(u / geom.sdd);
    if (!cfg.cosine) continue;
    for (std::size_t r = 0; r < rows; ++r) {
      const double v = (static_cast<double>(r) - geom.center_v()) * geom.pixel;
      cosine[r * cols + c] = geom.sdd / std::sqrt(geom.sdd * geom.sdd + u * u + v * v);
    }
  }

  ProjectionStack out(stack.views, rows, cols, stack.pixel_mm);
  const auto views = static_cast<long>(stack.views);
#pragma omp parallel
  {
    FftBuffers buf(len);
    std::vector<double> weight(cols);
#pragma omp for schedule(static)
    for (long iv = 0; iv < views; ++iv) {
      const auto i = static_cast<std::size_t>(iv);
      const double beta = (static_cast<double>(i) + 0.5) * geom.angular_increment;
      for (std::size_t c = 0; c < cols; ++c) weight[c] = cfg.parker ? parker_weight(beta, gamma[c], delta) : 1.0;
      const auto src = stack.view(i);
      auto dst = out.view(i);
      for (std::size_t r = 0; r < rows; ++r) {
        double* row = buf.real;
        std::fill(row, row + len, 0.0);
        for (std::size_t c = 0; c < cols; ++c) row[pad + c] = src[r * cols + c] * cosine[r * cols + c] * weight[c];
        for (std::size_t j = 0; j < pad; ++j) {
          const std::size_t m = std::min(j, cols - 1);
          row[pad - 1 - j] = row[pad + m];
          row[pad + cols + j] = row[pad + cols - 1 - m];
        }
        fftw_execute_dft_r2c(forward, buf.real, buf.spec);
        for (std::size_t k = 0; k < kernel_hat.size(); ++k) {
          buf.spec[k][0] *= kernel_hat[k];
          buf.spec[k][1] *= kernel_hat[k];
        }
        fftw_execute_dft_c2r(backward, buf.spec, buf.real);
        for (std::size_t c = 0; c < cols; ++c) dst[r * cols + c] = buf.real[pad + c];
      }
    }
  }
  {
    std::lock_guard<std::mutex> lock(planner_mutex());
    fftw_destroy_plan(forward);
    fftw_destroy_plan(backward);
  }
  return out;
}

MlsDeform::MlsDeform(const std::vector<moco::Joints>& joints, double epsilon) {
  if (joints.empty()) throw ShapeError("no joints for 3D deformation");
  fields_.reserve(joints.size());
  for (const auto& j : joints) {
    const bool same = (j.ankle - joints[0].ankle).norm() == 0.0 && (j.knee - joints[0].knee).norm() == 0.0 &&
                      (j.hip - joints[0].hip).norm() == 0.0;
    if (same)
      fields_.push_back(nullptr);
    else
      fields_.push_back(std::make_unique<moco::RigidMls3D>(moco::control_points_3d(j, joints[0]), epsilon));
  }
}

Vec3 MlsDeform::apply(std::size_t view, const Vec3& x) const {
  const auto& f = fields_[view];
  return f ? (*f)(x) : x;
}

Volume backproject(const ProjectionStack& filtered, const geometry::ScanGeometry& geom, const VolumeSpec& spec,
                   const DeformField* deform, bool parker) {
  if (filtered.views != geom.n_proj || filtered.rows != geom.det_rows || filtered.cols != geom.det_cols)
    throw ShapeError("projection stack does not match geometry");
  Volume vol(spec);
  const double scale = parker ? geom.angular_increment : geom.angular_increment * kPi / geom.total_arc();
  const double umax = static_cast<double>(filtered.cols) - 1.0;
  const double vmax = static_cast<double>(filtered.rows) - 1.0;
  const std::size_t cols = filtered.cols;
  const auto nz = static_cast<long>(spec.nz);

#pragma omp parallel for schedule(dynamic, 1)
  for (long kk = 0; kk < nz; ++kk) {
    const auto k = static_cast<std::size_t>(kk);
    double* slice = vol.data.data() + vol.index(0, 0, k);
    for (std::size_t i = 0; i < geom.n_proj; ++i) {
      const ProjectionMatrix& p = geom.matrices[i];
      const auto img = filtered.view(i);
      std::size_t idx = 0;
      for (std::size_t j = 0; j < spec.ny; ++j) {
        for (std::size_t ii = 0; ii < spec.nx; ++ii, ++idx) {
          Vec3 x = spec.voxel_center(ii, j, k);
          if (deform) x = deform->apply(i, x);
          const Vec3 h = p.leftCols<3>() * x + p.col(3);
          const double w = h.z();
          if (!(w > 0.0)) continue;
          const double u = h.x() / w, v = h.y() / w;
          if (!(u >= 0.0 && u <= umax && v >= 0.0 && v <= vmax)) continue;
          const auto u0 = static_cast<std::size_t>(u);
          const auto v0 = static_cast<std::size_t>(v);
          const std::size_t u1 = std::min(u0 + 1, cols - 1);
          const std::size_t v1 = std::min(v0 + 1, filtered.rows - 1);
          const double fu = u - static_cast<double>(u0), fv = v - static_cast<double>(v0);
          const double top = (1.0 - fu) * img[v0 * cols + u0] + fu * img[v0 * cols + u1];
          const double bottom = (1.0 - fu) * img[v1 * cols + u0] + fu * img[v1 * cols + u1];
          const double ratio = geom.sid / w;
          slice[idx] += scale * ratio * ratio * ((1.0 - fv) * top + fv * bottom);
        }
      }
    }
  }
  return vol;
}

Volume fbp(const ProjectionStack& stack, const geometry::ScanGeometry& geom, const VolumeSpec& spec,
           const FilterConfig& cfg, const DeformField* deform) {
  return backproject(preweight_and_filter(stack, geom, cfg), geom, spec, deform, cfg.parker);
}

Method method_from_string(const std::string& name) {
  if (name == "none" || name == "uncorrected") return Method::None;
  if (name == "rigid") return Method::Rigid;
  if (name == "mls2d") return Method::Mls2D;
  if (name == "mls3d") return Method::Mls3D;
  throw ConfigError("unknown method '" + name + "' (expected none|uncorrected|rigid|mls2d|mls3d)");
}

std::string to_string(Method m) {
  switch (m) {
    case Method::None:
      return "uncorrected";
    case Method::Rigid:
      return "rigid";
    case Method::Mls2D:
      return "mls2d";
    case Method::Mls3D:
      return "mls3d";
  }
  return "unknown";
}

ProjectionStack warp_projections(const ProjectionStack& stack, const geometry::ScanGeometry& geom,
                                 const std::vector<moco::Joints>& joints, const moco::MocoConfig& cfg) {
  if (joints.size() != stack.views) throw ShapeError("one joint set per view required");
  ProjectionStack out = stack;
  for (std::size_t i = 1; i < stack.views; ++i) {
    const auto cps = moco::control_points_2d(joints[i], joints[0], geom.matrices[i], geom, cfg);
    bool moved = false;
    for (std::size_t j = 0; j < cps.p.size(); ++j) moved = moved || cps.p[j] != cps.q[j];
    if (!moved) continue;
    out.set_image(i, moco::mls_warp_2d(stack.image(i), cps, cfg.epsilon));
  }
  return out;
}

Volume reconstruct(Method method, const ReconInputs& in) {
  if (!in.stack || !in.geom) throw ConfigError("reconstruction needs projections and geometry");
  switch (method) {
    case Method::None:
      return fbp(*in.stack, *in.geom, in.volume, in.filter);
    case Method::Rigid: {
      if (!in.motion) throw ConfigError("rigid reconstruction needs a motion series");
      const auto corrected = moco::correct_projection_matrices(*in.geom, *in.motion);
      return fbp(*in.stack, corrected, in.volume, in.filter);
    }
    case Method::Mls2D: {
      if (!in.joints) throw ConfigError("mls2d reconstruction needs joint positions");
      return fbp(warp_projections(*in.stack, *in.geom, *in.joints, in.moco), *in.geom, in.volume, in.filter);
    }
    case Method::Mls3D: {
      if (!in.joints) throw ConfigError("mls3d reconstruction needs joint positions");
      if (in.joints->size() != in.geom->n_proj) throw ShapeError("one joint set per view required");
      const MlsDeform hook(*in.joints, in.moco.epsilon);
      return fbp(*in.stack, *in.geom, in.volume, in.filter, &hook);
    }
  }
  throw ConfigError("unknown reconstruction method");
}

}  // namespace imumoco::recon
