#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "imumoco/geometry.hpp"
#include "imumoco/image.hpp"
#include "imumoco/types.hpp"

namespace imumoco::phantom {

/// Hip, knee and ankle trajectories in world metres.
struct JointTracks {
  double sample_rate_hz = 120.0;
  std::vector<Vec3> hip;
  std::vector<Vec3> knee;
  std::vector<Vec3> ankle;

  std::size_t size() const { return knee.size(); }
  double dt() const { return 1.0 / sample_rate_hz; }
};

/// Throws KinematicsError if lengths differ, fewer than 2 frames are given,
/// or a segment length varies by more than `tolerance` metres.
void validate_tracks(const JointTracks& tracks, double tolerance = 1e-9);

/// Parameters of the synthetic standing-sway generator.
struct SwayParams {
  double duration_s = 8.0;
  double rate_hz = 120.0;
  double squat_angle_deg = 30.0;
  Vec3 sway_amplitude = Vec3(2.0e-3, 1.0e-3, 2.0e-3);  // m, whole-leg translation
  Vec3 sway_frequency = Vec3(0.23, 0.31, 0.17);        // Hz
  double flexion_mod_amp_deg = 0.5;
  double flexion_mod_freq_hz = 0.2;
  double flexion_drift_deg = 0.0;  // linear change of knee flexion over the duration
  double thigh_length = 0.42;
  double shank_length = 0.40;
  Vec3 knee_position = Vec3::Zero();  // knee location at the nominal squat angle
  std::uint64_t seed = 1;
};

/// Smooth sway tracks: fixed segment lengths, knee flexion = squat angle plus
/// a sinusoidal modulation and optional drift, and a whole-leg translation
/// made of summed sinusoids with seeded phases. Frames: round(duration * rate).
JointTracks synthesize_sway_tracks(const SwayParams& params);

/// CSV: optional `# units: mm|m` comment, header
/// `t,hip_x,hip_y,hip_z,knee_x,knee_y,knee_z,ankle_x,ankle_y,ankle_z`.
void save_tracks_csv(const JointTracks& tracks, const std::string& path);
JointTracks load_tracks_csv(const std::string& path, double rigid_tolerance = 1e-6);

/// Orientation and position of one segment per frame, with time derivatives.
struct SegmentKinematics {
  double sample_rate_hz = 120.0;
  double length = 0.0;  // proximal to distal joint, m
  std::vector<Mat3> rotation;
  std::vector<Mat3> rotation_dot;
  std::vector<Mat3> rotation_ddot;
  std::vector<Vec3> origin;
  std::vector<Vec3> origin_dot;
  std::vector<Vec3> origin_ddot;

  std::size_t size() const { return rotation.size(); }
  double dt() const { return 1.0 / sample_rate_hz; }
  Affine4 pose(std::size_t t) const { return make_pose(rotation[t], origin[t]); }
};

struct LegKinematics {
  SegmentKinematics thigh;
  SegmentKinematics shank;
};

/// Segment frames: origin at the proximal joint, local y from distal to
/// proximal joint, local x = world x with the segment-axis component removed.
/// Derivatives use central differences, second-order one-sided at the ends.
LegKinematics forward_kinematics(const JointTracks& tracks);

/// Rotation for a segment axis under the minimal-roll convention.
Mat3 segment_frame(const Vec3& proximal, const Vec3& distal);

/// Finite-difference derivatives of a sampled sequence (central inside,
/// second-order one-sided at the ends).
template <typename T>
std::vector<T> first_derivative(const std::vector<T>& f, double dt);
template <typename T>
std::vector<T> second_derivative(const std::vector<T>& f, double dt);

enum class Segment { Thigh, Shank };
enum class Shape { Ellipsoid, Cylinder };

/// Nesting layers; a higher layer overrides a lower one where they overlap.
enum class Tissue : int { Soft = 0, Bone = 1, Marrow = 2 };

/// Attenuating primitive in its segment frame. For ellipsoids `half_extent`
/// holds the semi-axes; for cylinders (axis = local y) it holds
/// (radius_x, half_length, radius_z).
struct Primitive {
  std::string name;
  Segment segment = Segment::Shank;
  Shape shape = Shape::Ellipsoid;
  Tissue tissue = Tissue::Soft;
  Affine4 placement = Affine4::Identity();
  Vec3 half_extent = Vec3::Ones();
  double mu = 0.0;  // 1/m
};

struct LegPhantom {
  std::vector<Primitive> primitives;
};

/// Default attenuation values (synthetic, per metre).
inline constexpr double kMuSoft = 20.0;
inline constexpr double kMuBone = 50.0;
inline constexpr double kMuMarrow = 10.0;

/// Thigh/shank phantom with femur, patella, tibia, fibula and marrow cavities.
LegPhantom default_leg_phantom(double thigh_length = 0.42, double shank_length = 0.40);

Primitive make_sphere(const Vec3& center, double radius, double mu, Tissue tissue = Tissue::Soft,
                      Segment segment = Segment::Shank);

struct SegmentPoses {
  Affine4 thigh = Affine4::Identity();
  Affine4 shank = Affine4::Identity();
};

inline SegmentPoses poses_at(const LegKinematics& kin, std::size_t t) { return {kin.thigh.pose(t), kin.shank.pose(t)}; }

/// Line integral of attenuation along one ray; nested primitives override.
double line_integral(const LegPhantom& phantom, const SegmentPoses& poses, const geometry::Ray& ray);

/// Analytic projection image (rows x cols of geom) under matrix p.
Image2D render_projection(const LegPhantom& phantom, const SegmentPoses& poses, const ProjectionMatrix& p,
                          const geometry::ScanGeometry& geom);

/// One image per view, view i rendered with poses[i].
ProjectionStack render_stack(const LegPhantom& phantom, const std::vector<SegmentPoses>& poses,
                             const geometry::ScanGeometry& geom);

/// Attenuation at a world point (innermost primitive wins).
double attenuation_at(const LegPhantom& phantom, const SegmentPoses& poses, const Vec3& x);

/// Point-sampled ground truth at voxel centres.
Volume voxelize(const LegPhantom& phantom, const SegmentPoses& poses, const VolumeSpec& spec);

}  // namespace imumoco::phantom
