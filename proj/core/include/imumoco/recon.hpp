#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "imumoco/geometry.hpp"
#include "imumoco/image.hpp"
#include "imumoco/moco.hpp"
#include "imumoco/types.hpp"

namespace imumoco::recon {

enum class Ramp { SheppLogan };

struct FilterConfig {
  bool cosine = true;
  bool parker = true;
  /// Mirrored extension per side in pixels; negative means half the detector width.
  long padding = -1;
  Ramp ramp = Ramp::SheppLogan;
};

/// Discrete Shepp-Logan kernel (already multiplied by the sample spacing tau):
/// -2 / (pi^2 tau (4 n^2 - 1)).
double shepp_logan_tap(long n, double tau);

/// Parker weight for view angle beta in [0, pi + 2 delta] and fan angle gamma,
/// whose conjugate ray is (beta + pi + 2 gamma, -gamma).
double parker_weight(double beta, double gamma, double delta);

/// Half-width of the redundancy transition for the scanned arc: (arc - pi) / 2.
/// Throws ShortScanError if it is smaller than half the fan angle.
double parker_delta(const geometry::ScanGeometry& geom);

/// Cosine and Parker pre-weighting, mirrored row extension and ramp filtering
/// (FFT, linear convolution), cropped back to the detector.
ProjectionStack preweight_and_filter(const ProjectionStack& stack, const geometry::ScanGeometry& geom,
                                     const FilterConfig& cfg = {});

/// Per-view point map applied to voxel centres before projection.
class DeformField {
 public:
  virtual ~DeformField() = default;
  virtual Vec3 apply(std::size_t view, const Vec3& x) const = 0;
};

/// x -> T(i) x.
class RigidDeform final : public DeformField {
 public:
  explicit RigidDeform(std::vector<Affine4> transforms) : transforms_(std::move(transforms)) {}
  Vec3 apply(std::size_t view, const Vec3& x) const override { return transform_point(transforms_[view], x); }

 private:
  std::vector<Affine4> transforms_;
};

/// Three-joint rigid MLS per view; views whose control points coincide
/// pass points through unchanged.
class MlsDeform final : public DeformField {
 public:
  MlsDeform(const std::vector<moco::Joints>& joints, double epsilon = 1e-8);
  Vec3 apply(std::size_t view, const Vec3& x) const override;

 private:
  std::vector<std::unique_ptr<moco::RigidMls3D>> fields_;
};

/// Voxel-driven cone-beam back-projection: sum over views of
/// scale * (sid / w)^2 * Q_i(u, v) with bilinear readout (0 off the detector),
/// where scale is the angular increment (Parker) or increment * pi / arc.
/// With a deform field the voxel centre is mapped before projection and the
/// value is accumulated at the original voxel.
Volume backproject(const ProjectionStack& filtered, const geometry::ScanGeometry& geom, const VolumeSpec& spec,
                   const DeformField* deform = nullptr, bool parker = true);

Volume fbp(const ProjectionStack& stack, const geometry::ScanGeometry& geom, const VolumeSpec& spec,
           const FilterConfig& cfg = {}, const DeformField* deform = nullptr);

enum class Method { None, Rigid, Mls2D, Mls3D };

Method method_from_string(const std::string& name);
std::string to_string(Method m);

struct ReconInputs {
  const ProjectionStack* stack = nullptr;
  const geometry::ScanGeometry* geom = nullptr;
  VolumeSpec volume;
  FilterConfig filter;
  const moco::MotionSeries* motion = nullptr;         // rigid
  const std::vector<moco::Joints>* joints = nullptr;  // mls2d / mls3d, one per view
  moco::MocoConfig moco;
};

/// Warps every projection with its 2D control points (view 0 is the reference).
ProjectionStack warp_projections(const ProjectionStack& stack, const geometry::ScanGeometry& geom,
                                 const std::vector<moco::Joints>& joints, const moco::MocoConfig& cfg);

/// none: plain FBP; rigid: P(i) M(i); mls2d: warped projections; mls3d: MLS hook.
Volume reconstruct(Method method, const ReconInputs& in);

}  // namespace imumoco::recon
