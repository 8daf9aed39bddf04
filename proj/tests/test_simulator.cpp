#include <doctest.h>

#include <cstring>

#include "freescan/simulator.hpp"
#include "support/test_support.hpp"

using namespace freescan;
using namespace freescan::simulator;
namespace ts = freescan::testsupport;

TEST_SUITE_BEGIN("simulator");

TEST_CASE("straight line with zero noise: unit steps, identity rotations") {
  TrajectorySpec spec;
  spec.shape = TrajectoryShape::kLine;
  spec.length_mm = 100.0;
  spec.n_frames = 101;
  const auto poses = generate_trajectory(spec, 0);
  REQUIRE(poses.size() == 101);
  for (std::size_t m = 0; m + 1 < poses.size(); ++m) {
    const auto rel =
        geometry::ground_truth_relative(poses[m], poses[m + 1]);
    CHECK((rel.rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() <
          1e-12);
    CHECK(rel.translation.norm() == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("paper travel range is supported") {
  TrajectorySpec spec;
  spec.length_mm = 200.0;
  spec.n_frames = 430;
  const auto poses = generate_trajectory(spec, 1);
  const double travel =
      (poses.back().translation - poses.front().translation).norm();
  CHECK(travel == doctest::Approx(200.0).epsilon(1e-9));
  CHECK_THROWS_AS(generate_trajectory({TrajectoryShape::kLine,
                                       Orientation::kPerpendicular, 100.0, 1},
                                      0),
                  ConfigError);
}

TEST_CASE("C shape has a constant per-step relative transform") {
  TrajectorySpec spec;
  spec.shape = TrajectoryShape::kCShape;
  spec.orientation = Orientation::kPerpendicular;
  spec.length_mm = 150.0;
  spec.n_frames = 120;
  const auto poses = generate_trajectory(spec, 0);
  const auto first = geometry::ground_truth_relative(poses[0], poses[1]);
  CHECK((first.rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() >
        1e-4);  // it actually turns
  for (std::size_t m = 1; m + 1 < poses.size(); ++m) {
    const auto rel = geometry::ground_truth_relative(poses[m], poses[m + 1]);
    CHECK(ts::transform_diff(rel, first) < 1e-9);
  }
}

TEST_CASE("S shape: constant step within each half, mirrored between halves") {
  TrajectorySpec spec;
  spec.shape = TrajectoryShape::kSShape;
  spec.length_mm = 120.0;
  spec.n_frames = 121;  // step 1 mm; halves split at frame 60
  const auto poses = generate_trajectory(spec, 0);
  const auto first = geometry::ground_truth_relative(poses[0], poses[1]);
  const auto second_half =
      geometry::ground_truth_relative(poses[70], poses[71]);
  for (int m = 1; m < 59; ++m) {
    CHECK(ts::transform_diff(
              geometry::ground_truth_relative(poses[m], poses[m + 1]), first) <
          1e-9);
  }
  for (int m = 61; m < 119; ++m) {
    CHECK(ts::transform_diff(
              geometry::ground_truth_relative(poses[m], poses[m + 1]),
              second_half) < 1e-9);
  }
  CHECK(ts::transform_diff(first, second_half) > 1e-4);
}

TEST_CASE("orientation places the image normal along or across travel") {
  TrajectorySpec spec;
  spec.length_mm = 50.0;
  spec.n_frames = 11;
  spec.orientation = Orientation::kPerpendicular;
  auto poses = generate_trajectory(spec, 0);
  // Straight +x travel: image normal (tool z) along travel.
  CHECK((poses[0].rotation.col(2) - Eigen::Vector3d(1, 0, 0)).norm() < 1e-12);

  spec.orientation = Orientation::kParallel;
  poses = generate_trajectory(spec, 0);
  // Image x axis along travel; normal across it.
  CHECK((poses[0].rotation.col(0) - Eigen::Vector3d(1, 0, 0)).norm() < 1e-12);
  CHECK(std::abs(poses[0].rotation.col(2).dot(Eigen::Vector3d(1, 0, 0))) <
        1e-12);
}

TEST_CASE("procedural volume is deterministic, bounded and seed-sensitive") {
  const ProceduralVolume a(7, 64, 3.0);
  const ProceduralVolume b(7, 64, 3.0);
  const ProceduralVolume c(8, 64, 3.0);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-200, 200);
  bool differs = false;
  for (int k = 0; k < 500; ++k) {
    const Eigen::Vector3d p(u(rng), u(rng), u(rng));
    const double va = a.value(p);
    CHECK(va >= 0.0);
    CHECK(va <= 1.0);
    CHECK(va == b.value(p));
    differs = differs || std::abs(va - c.value(p)) > 1e-6;
  }
  CHECK(differs);
}

TEST_CASE("rendering is deterministic and depends only on the plane product") {
  const ProceduralVolume vol(3, 64, 3.0);
  std::mt19937_64 rng(2);
  const geometry::RigidTransform pose = ts::random_transform(rng, 0.5, 40.0);
  const geometry::RigidTransform calib = make_calibration(5);
  const auto f1 = render_frame(vol, pose, calib, 32, 24, 0.5);
  const auto f2 = render_frame(vol, pose, calib, 32, 24, 0.5);
  CHECK(std::memcmp(f1.pixels.data(), f2.pixels.data(),
                    f1.pixels.size() * sizeof(float)) == 0);

  // Same plane product, different (pose, calib) factorization.
  const auto product = geometry::compose(pose, calib);
  const auto f3 = render_frame(vol, product, geometry::RigidTransform{}, 32,
                               24, 0.5);
  CHECK(std::memcmp(f1.pixels.data(), f3.pixels.data(),
                    f1.pixels.size() * sizeof(float)) == 0);
}

TEST_CASE("one correlation length of motion decorrelates the frame") {
  const double corr = 3.0;
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    const ProceduralVolume vol(seed, 64, corr);
    geometry::RigidTransform pose;  // identity: plane normal = +z
    const auto base = render_frame(vol, pose, {}, 80, 64, 0.5);
    pose.translation = Eigen::Vector3d(0, 0, corr);
    const auto moved = render_frame(vol, pose, {}, 80, 64, 0.5);
    CHECK(ts::pearson(base.pixels, moved.pixels) < 0.5);

    // A tenth of the correlation length stays strongly correlated.
    pose.translation = Eigen::Vector3d(0, 0, corr / 10.0);
    const auto close = render_frame(vol, pose, {}, 80, 64, 0.5);
    CHECK(ts::pearson(base.pixels, close.pixels) > 0.8);
  }
}

TEST_CASE("in-plane translation by whole pixels shifts the frame") {
  const ProceduralVolume vol(21, 64, 3.0);
  const double spacing = 0.5;
  const int k = 3;
  geometry::RigidTransform pose;  // axis-aligned: image x = world x
  const auto base = render_frame(vol, pose, {}, 40, 32, spacing);
  pose.translation = Eigen::Vector3d(k * spacing, 0, 0);
  const auto moved = render_frame(vol, pose, {}, 40, 32, spacing);
  for (int v = 0; v < 32; ++v) {
    for (int u = 0; u + k < 40; ++u) {
      CHECK(std::abs(moved.at(v, u) - base.at(v, u + k)) < 1e-6f);
    }
  }
}

TEST_CASE("simulate_dataset: determinism, distinct volumes, shared calib") {
  TrajectorySpec spec;
  spec.n_frames = 6;
  spec.length_mm = 10.0;
  const auto a = simulate_dataset(2, 2, {spec}, 77, {32, 24, 0.5, 20.0, 32, 3.0});
  const auto b = simulate_dataset(2, 2, {spec}, 77, {32, 24, 0.5, 20.0, 32, 3.0});
  REQUIRE(a.size() == 4);
  for (std::size_t s = 0; s < a.size(); ++s) {
    CHECK(a[s].id() == b[s].id());
    for (std::size_t m = 0; m < a[s].n_frames(); ++m) {
      CHECK(std::memcmp(a[s].frames[m].pixels.data(),
                        b[s].frames[m].pixels.data(),
                        a[s].frames[m].pixels.size() * sizeof(float)) == 0);
      CHECK(std::memcmp(a[s].world_from_tool[m].matrix().data(),
                        b[s].world_from_tool[m].matrix().data(),
                        16 * sizeof(double)) == 0);
    }
  }
  // Calibration is shared and far from identity.
  CHECK(ts::transform_diff(a[0].calib, a[3].calib) == 0.0);
  CHECK(a[0].calib.translation.norm() > 5.0);
  CHECK((a[0].calib.rotation - Eigen::Matrix3d::Identity())
            .cwiseAbs()
            .maxCoeff() > 0.05);
  CHECK(a[0].fps == 20.0);

  // Different subjects look at different volumes.
  CHECK(std::memcmp(a[0].frames[0].pixels.data(), a[2].frames[0].pixels.data(),
                    a[0].frames[0].pixels.size() * sizeof(float)) != 0);

  // Minimal dataset is valid.
  TrajectorySpec tiny;
  tiny.n_frames = 2;
  tiny.length_mm = 2.0;
  const auto minimal =
      simulate_dataset(1, 1, {tiny}, 0, {16, 12, 0.5, 20.0, 16, 3.0});
  CHECK(minimal.size() == 1);
  CHECK(minimal[0].n_frames() == 2);
}

TEST_CASE("ground truth is self-consistent under chaining") {
  TrajectorySpec spec;
  spec.shape = TrajectoryShape::kSShape;
  spec.n_frames = 60;
  spec.length_mm = 80.0;
  const auto scans =
      simulate_dataset(1, 1, {spec}, 5, {24, 20, 0.5, 20.0, 24, 3.0});
  const auto& scan = scans[0];
  const auto corners =
      geometry::corner_points(scan.width(), scan.height(), scan.pixel_spacing);

  geometry::RigidTransform acc;  // chain from frame 0
  for (std::size_t m = 1; m < scan.n_frames(); ++m) {
    const auto rel = geometry::ground_truth_relative(
        scan.world_from_tool[m - 1], scan.world_from_tool[m]);
    acc = geometry::compose(acc, geometry::inverse(rel));
    const auto via_chain = geometry::compose(scan.world_from_tool[0], acc);
    const auto direct = scan.world_from_tool[m];
    const auto pa = geometry::apply(geometry::compose(via_chain, scan.calib),
                                    corners);
    const auto pb =
        geometry::apply(geometry::compose(direct, scan.calib), corners);
    for (std::size_t n = 0; n < 4; ++n) {
      CHECK((pa.points[n] - pb.points[n]).norm() < 1e-6);
    }
  }
}

TEST_SUITE_END();
