#include "freescan/simulator.hpp"

#include <cmath>

namespace freescan::simulator {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct ArcSegment {
  double s_begin;      // arc length at segment start
  double s_end;
  double curvature;    // signed, 1/mm; 0 = straight
  Eigen::Vector2d p0;  // position at segment start
  double heading0;     // tangent angle at segment start
};

// Closed-form point on a constant-curvature segment; no per-frame
// accumulation, so consecutive relative transforms stay equal to 1e-12.
void eval_segment(const ArcSegment& seg, double s, Eigen::Vector2d& p,
                  double& heading) {
  const double ds = s - seg.s_begin;
  if (seg.curvature == 0.0) {
    heading = seg.heading0;
    p = seg.p0 + ds * Eigen::Vector2d(std::cos(heading), std::sin(heading));
    return;
  }
  heading = seg.heading0 + seg.curvature * ds;
  const double r = 1.0 / seg.curvature;
  p = seg.p0 + r * Eigen::Vector2d(std::sin(heading) - std::sin(seg.heading0),
                                   -std::cos(heading) + std::cos(seg.heading0));
}

std::vector<ArcSegment> build_segments(const TrajectorySpec& spec) {
  const double len = spec.length_mm;
  const double turn = spec.turn_deg * kPi / 180.0;
  std::vector<ArcSegment> segs;
  switch (spec.shape) {
    case TrajectoryShape::kLine:
      segs.push_back({0.0, len, 0.0, {0.0, 0.0}, 0.0});
      break;
    case TrajectoryShape::kCShape:
      segs.push_back({0.0, len, turn / len, {0.0, 0.0}, 0.0});
      break;
    case TrajectoryShape::kSShape: {
      // Two opposing arcs of equal curvature magnitude.
      const double kappa = turn / len;
      ArcSegment first{0.0, len / 2.0, kappa, {0.0, 0.0}, 0.0};
      Eigen::Vector2d pm;
      double hm;
      eval_segment(first, len / 2.0, pm, hm);
      segs.push_back(first);
      segs.push_back({len / 2.0, len, -kappa, pm, hm});
      break;
    }
  }
  return segs;
}

Eigen::Matrix3d orientation_matrix(double heading, Orientation orientation) {
  const Eigen::Vector3d tangent(std::cos(heading), std::sin(heading), 0.0);
  const Eigen::Vector3d left(-std::sin(heading), std::cos(heading), 0.0);
  const Eigen::Vector3d up(0.0, 0.0, 1.0);
  Eigen::Matrix3d r;
  if (orientation == Orientation::kPerpendicular) {
    // Image normal (tool z) along travel.
    r.col(0) = left;
    r.col(1) = up;
    r.col(2) = tangent;
  } else {
    // Image x along travel, normal across it.
    r.col(0) = tangent;
    r.col(1) = up;
    r.col(2) = -left;
  }
  return r;
}

geometry::RigidTransform random_rigid(Rng& rng, double max_angle_rad,
                                      double max_offset_mm) {
  std::uniform_real_distribution<double> ang(-max_angle_rad, max_angle_rad);
  std::uniform_real_distribution<double> off(-max_offset_mm, max_offset_mm);
  geometry::Pose6DoF p;
  p.euler = Eigen::Vector3d(ang(rng), ang(rng), ang(rng));
  p.translation = Eigen::Vector3d(off(rng), off(rng), off(rng));
  return geometry::pose_to_transform(p);
}

}  // namespace

TrajectoryShape shape_from_string(const std::string& s) {
  if (s == "line") return TrajectoryShape::kLine;
  if (s == "c_shape") return TrajectoryShape::kCShape;
  if (s == "s_shape") return TrajectoryShape::kSShape;
  throw ConfigError("unknown trajectory shape '" + s + "'");
}

Orientation orientation_from_string(const std::string& s) {
  if (s == "perpendicular") return Orientation::kPerpendicular;
  if (s == "parallel") return Orientation::kParallel;
  throw ConfigError("unknown orientation '" + s + "'");
}

std::string to_string(TrajectoryShape s) {
  switch (s) {
    case TrajectoryShape::kLine: return "line";
    case TrajectoryShape::kCShape: return "c_shape";
    case TrajectoryShape::kSShape: return "s_shape";
  }
  return "?";
}

std::string to_string(Orientation o) {
  return o == Orientation::kPerpendicular ? "perpendicular" : "parallel";
}

std::vector<geometry::RigidTransform> generate_trajectory(
    const TrajectorySpec& spec, std::uint64_t rng_seed) {
  if (spec.n_frames < 2) {
    throw ConfigError("trajectory needs at least 2 frames");
  }
  if (!(spec.length_mm > 0.0)) {
    throw ConfigError("trajectory length must be positive");
  }
  const auto segs = build_segments(spec);
  const double step = spec.length_mm / (spec.n_frames - 1);
  Rng rng(mix_seed(rng_seed, 0x7261'6a65ULL));

  std::vector<geometry::RigidTransform> poses;
  poses.reserve(spec.n_frames);
  for (int m = 0; m < spec.n_frames; ++m) {
    const double s = std::min(m * step, spec.length_mm);
    const ArcSegment* seg = &segs.back();
    for (const auto& candidate : segs) {
      if (s <= candidate.s_end) {
        seg = &candidate;
        break;
      }
    }
    Eigen::Vector2d p;
    double heading;
    eval_segment(*seg, s, p, heading);

    geometry::RigidTransform pose;
    pose.rotation = orientation_matrix(heading, spec.orientation);
    pose.translation = Eigen::Vector3d(p.x(), p.y(), 0.0);
    if (spec.noise_translation_mm > 0.0 || spec.noise_rotation_rad > 0.0) {
      std::normal_distribution<double> nt(0.0, spec.noise_translation_mm);
      std::normal_distribution<double> nr(0.0, spec.noise_rotation_rad);
      geometry::Pose6DoF jitter;
      jitter.euler = Eigen::Vector3d(nr(rng), nr(rng), nr(rng));
      jitter.translation = Eigen::Vector3d(nt(rng), nt(rng), nt(rng));
      pose = geometry::compose(pose, geometry::pose_to_transform(jitter));
    }
    poses.push_back(pose);
  }
  return poses;
}

ProceduralVolume::ProceduralVolume(std::uint64_t seed, int band_count,
                                   double smoothness_mm)
    : seed_(seed), smoothness_mm_(smoothness_mm) {
  if (band_count < 1) throw ConfigError("band_count must be >= 1");
  if (!(smoothness_mm > 0.0)) throw ConfigError("smoothness must be positive");
  Rng rng(mix_seed(seed, 0x766f'6c75'6d65ULL));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> wav(2.0 * smoothness_mm,
                                             4.0 * smoothness_mm);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * kPi);
  std::uniform_real_distribution<double> amp(0.5, 1.0);
  double sum_sq = 0.0;
  wavevectors_.reserve(band_count);
  for (int b = 0; b < band_count; ++b) {
    Eigen::Vector3d dir(gauss(rng), gauss(rng), gauss(rng));
    while (dir.norm() < 1e-6) dir = {gauss(rng), gauss(rng), gauss(rng)};
    dir.normalize();
    const double wavelength = wav(rng);
    wavevectors_.push_back(dir * (2.0 * kPi / wavelength));
    phases_.push_back(phase(rng));
    const double a = amp(rng);
    amplitudes_.push_back(a);
    sum_sq += a * a;
  }
  inv_sigma_ = 1.0 / std::sqrt(sum_sq / 2.0);
}

double ProceduralVolume::value(const Eigen::Vector3d& pos_mm) const {
  double s = 0.0;
  for (std::size_t b = 0; b < wavevectors_.size(); ++b) {
    s += amplitudes_[b] * std::sin(wavevectors_[b].dot(pos_mm) + phases_[b]);
  }
  return 0.5 + 0.5 * std::tanh(0.8 * s * inv_sigma_);
}

dataio::Frame render_frame(const ProceduralVolume& vol,
                           const geometry::RigidTransform& world_from_tool,
                           const geometry::RigidTransform& calib, int width,
                           int height, double spacing_mm, int frame_index) {
  // Compose once so frames depend on the pose only through the product.
  const geometry::RigidTransform plane =
      geometry::compose(world_from_tool, calib);
  dataio::Frame f;
  f.width = width;
  f.height = height;
  f.index = frame_index;
  f.pixels.resize(static_cast<std::size_t>(width) * height);
  const Eigen::Vector3d du = plane.rotation.col(0) * spacing_mm;
  const Eigen::Vector3d dv = plane.rotation.col(1) * spacing_mm;
  for (int v = 0; v < height; ++v) {
    const Eigen::Vector3d row_origin = plane.translation + v * dv;
    for (int u = 0; u < width; ++u) {
      const Eigen::Vector3d pos = row_origin + u * du;
      f.pixels[static_cast<std::size_t>(v) * width + u] =
          static_cast<float>(vol.value(pos));
    }
  }
  return f;
}

geometry::RigidTransform make_calibration(std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x6361'6c69'62ULL));
  std::uniform_real_distribution<double> ang(0.10, 0.20);
  std::uniform_real_distribution<double> sign(-1.0, 1.0);
  std::uniform_real_distribution<double> off(10.0, 20.0);
  geometry::Pose6DoF p;
  for (int k = 0; k < 3; ++k) {
    p.euler[k] = ang(rng) * (sign(rng) < 0.0 ? -1.0 : 1.0);
    p.translation[k] = off(rng) * (sign(rng) < 0.0 ? -1.0 : 1.0);
  }
  return geometry::pose_to_transform(p);
}

std::vector<dataio::Scan> simulate_dataset(
    int n_subjects, int scans_per_subject,
    const std::vector<TrajectorySpec>& specs, std::uint64_t seed,
    const DatasetOptions& options) {
  if (n_subjects < 1 || scans_per_subject < 1) {
    throw ConfigError("simulate_dataset: counts must be positive");
  }
  if (specs.empty()) {
    throw ConfigError("simulate_dataset: need at least one trajectory spec");
  }
  const geometry::RigidTransform calib = make_calibration(seed);

  std::vector<dataio::Scan> scans;
  scans.reserve(static_cast<std::size_t>(n_subjects) * scans_per_subject);
  for (int si = 0; si < n_subjects; ++si) {
    const ProceduralVolume volume(mix_seed(seed, 1000 + si),
                                  options.band_count, options.smoothness_mm);
    for (int ci = 0; ci < scans_per_subject; ++ci) {
      const TrajectorySpec& spec = specs[ci % specs.size()];
      const std::uint64_t scan_seed =
          mix_seed(seed, 0x5343414eULL + 7919ULL * si + ci);

      auto poses = generate_trajectory(spec, scan_seed);
      // Place each sweep somewhere else in the subject volume; relative
      // ground truth is unaffected by this world-frame move.
      Rng rng(mix_seed(scan_seed, 0x706c'6163'65ULL));
      const geometry::RigidTransform offset = random_rigid(rng, kPi, 50.0);
      for (auto& pose : poses) pose = geometry::compose(offset, pose);

      dataio::Scan scan;
      scan.calib = calib;
      scan.fps = options.fps;
      scan.pixel_spacing = options.pixel_spacing_mm;
      scan.subject_id = "s" + std::to_string(si);
      char label[64];
      std::snprintf(label, sizeof(label), "%02d_%s_%s", ci,
                    to_string(spec.shape).c_str(),
                    to_string(spec.orientation).c_str());
      scan.scan_label = label;
      scan.trajectory_shape = to_string(spec.shape);
      scan.orientation = to_string(spec.orientation);
      scan.world_from_tool = poses;
      scan.frames.reserve(poses.size());
      for (std::size_t m = 0; m < poses.size(); ++m) {
        scan.frames.push_back(render_frame(volume, poses[m], calib,
                                           options.width, options.height,
                                           options.pixel_spacing_mm,
                                           static_cast<int>(m)));
      }
      scan.validate();
      scans.push_back(std::move(scan));
    }
  }
  return scans;
}

}  // namespace freescan::simulator
