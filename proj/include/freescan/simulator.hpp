#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "freescan/dataio.hpp"
#include "freescan/geometry.hpp"

namespace freescan::simulator {

enum class TrajectoryShape { kLine, kCShape, kSShape };
enum class Orientation { kPerpendicular, kParallel };

TrajectoryShape shape_from_string(const std::string& s);
Orientation orientation_from_string(const std::string& s);
std::string to_string(TrajectoryShape s);
std::string to_string(Orientation o);

struct TrajectorySpec {
  TrajectoryShape shape = TrajectoryShape::kLine;
  Orientation orientation = Orientation::kPerpendicular;
  double length_mm = 100.0;  // total probe travel
  int n_frames = 100;
  double noise_translation_mm = 0.0;  // per-frame pose jitter std
  double noise_rotation_rad = 0.0;
  double turn_deg = 90.0;  // total turn of a C; an S turns +/- half of this
};

/// World<-tool poses along the requested sweep. Constant arc-length step
/// length_mm/(n_frames-1); perpendicular puts the image normal along the
/// travel direction, parallel across it. Deterministic per seed.
std::vector<geometry::RigidTransform> generate_trajectory(
    const TrajectorySpec& spec, std::uint64_t rng_seed);

/// Smooth speckle-like scalar field on an unbounded domain: a seeded sum of
/// random-frequency 3D sinusoids squashed into [0,1]. Sampling is a pure
/// deterministic function of (seed, position); the intensity decorrelates
/// over roughly one correlation length in any direction, which is what makes
/// inter-frame motion recoverable from image content.
class ProceduralVolume {
 public:
  ProceduralVolume(std::uint64_t seed, int band_count, double smoothness_mm);

  double value(const Eigen::Vector3d& pos_mm) const;

  std::uint64_t seed() const { return seed_; }
  double correlation_length_mm() const { return smoothness_mm_; }

 private:
  std::uint64_t seed_;
  double smoothness_mm_;
  double inv_sigma_;
  std::vector<Eigen::Vector3d> wavevectors_;
  std::vector<double> phases_;
  std::vector<double> amplitudes_;
};

dataio::Frame render_frame(const ProceduralVolume& vol,
                           const geometry::RigidTransform& world_from_tool,
                           const geometry::RigidTransform& calib, int width,
                           int height, double spacing_mm, int frame_index = 0);

struct DatasetOptions {
  int width = 80;
  int height = 64;
  double pixel_spacing_mm = 0.5;
  double fps = 20.0;
  int band_count = 64;
  double smoothness_mm = 3.0;
};

/// A non-identity image->tool calibration (about 10 deg rotation and 20 mm
/// offset) derived from the seed; surfaces bugs where calib is dropped.
geometry::RigidTransform make_calibration(std::uint64_t seed);

/// One procedural volume per subject, a shared calibration, trajectory specs
/// cycled over each subject's scans. Deterministic per seed.
std::vector<dataio::Scan> simulate_dataset(
    int n_subjects, int scans_per_subject,
    const std::vector<TrajectorySpec>& specs, std::uint64_t seed,
    const DatasetOptions& options = {});

}  // namespace freescan::simulator
