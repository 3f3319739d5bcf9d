#include <benchmark/benchmark.h>

#include "imumoco/moco.hpp"
#include "imumoco/phantom.hpp"
#include "imumoco/recon.hpp"

using namespace imumoco;

namespace {

const geometry::ScanGeometry& desk() {
  static const auto g = geometry::build_circular_trajectory(geometry::desk_profile());
  return g;
}

const ProjectionStack& leg_stack() {
  static const ProjectionStack s = [] {
    const auto& g = desk();
    phantom::SegmentPoses poses;
    poses.thigh = make_pose(Mat3::Identity(), Vec3(0, 0.42, 0));
    return phantom::render_stack(phantom::default_leg_phantom(), std::vector<phantom::SegmentPoses>(g.n_proj, poses),
                                 g);
  }();
  return s;
}

void BM_RenderProjection(benchmark::State& state) {
  const auto& g = desk();
  const auto leg = phantom::default_leg_phantom();
  phantom::SegmentPoses poses;
  poses.thigh = make_pose(Mat3::Identity(), Vec3(0, 0.42, 0));
  for (auto _ : state) benchmark::DoNotOptimize(phantom::render_projection(leg, poses, g.matrices[0], g));
}
BENCHMARK(BM_RenderProjection)->Unit(benchmark::kMillisecond);

void BM_Filter(benchmark::State& state) {
  const auto& stack = leg_stack();
  for (auto _ : state) benchmark::DoNotOptimize(recon::preweight_and_filter(stack, desk()));
}
BENCHMARK(BM_Filter)->Unit(benchmark::kMillisecond);

void BM_Backproject(benchmark::State& state) {
  const auto& g = desk();
  const auto filtered = recon::preweight_and_filter(leg_stack(), g);
  const auto spec =
      centered_volume(static_cast<std::size_t>(state.range(0)), 128e-3 / state.range(0), g.rotation_center);
  for (auto _ : state) benchmark::DoNotOptimize(recon::backproject(filtered, g, spec));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(spec.size() * g.n_proj));
}
BENCHMARK(BM_Backproject)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_RigidMls3D(benchmark::State& state) {
  const moco::ControlPoints3D cps{{Vec3(0.01, -0.3, 0.02), Vec3(0, 0, 0), Vec3(-0.02, 0.35, 0.01)},
                                  {Vec3(0.012, -0.3, 0.02), Vec3(0.001, 0.002, 0), Vec3(-0.02, 0.351, 0.013)}};
  const moco::RigidMls3D field(cps);
  Vec3 v(0.05, 0.1, -0.02);
  for (auto _ : state) {
    v = field(v) * 0.999;
    benchmark::DoNotOptimize(v);
  }
}
BENCHMARK(BM_RigidMls3D);

void BM_Mls3DSvd(benchmark::State& state) {
  const moco::ControlPoints3D cps{{Vec3(0.01, -0.3, 0.02), Vec3(0, 0, 0), Vec3(-0.02, 0.35, 0.01)},
                                  {Vec3(0.012, -0.3, 0.02), Vec3(0.001, 0.002, 0), Vec3(-0.02, 0.351, 0.013)}};
  Vec3 v(0.05, 0.1, -0.02);
  for (auto _ : state) {
    v = moco::mls_transform_3d_svd(v, cps) * 0.999;
    benchmark::DoNotOptimize(v);
  }
}
BENCHMARK(BM_Mls3DSvd);

void BM_MlsWarp2D(benchmark::State& state) {
  const auto& g = desk();
  const Image2D img = leg_stack().image(10);
  const moco::ControlPoints2D cps{{Vec2(150, 40), Vec2(155, 120), Vec2(148, 200)},
                                  {Vec2(152, 41), Vec2(156, 119), Vec2(149, 203)}};
  for (auto _ : state) benchmark::DoNotOptimize(moco::mls_warp_2d(img, cps));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(g.det_rows * g.det_cols));
}
BENCHMARK(BM_MlsWarp2D)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
