#pragma once

#include <Eigen/Dense>
#include <vector>

#include "freescan/common.hpp"

namespace freescan::geometry {

/// Rigid body motion in 3D. Rotation is orthonormal with det +1,
/// translation in mm. All values float64 regardless of model precision;
/// chaining hundreds of transforms amplifies rounding otherwise.
struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static RigidTransform identity() { return {}; }

  Eigen::Matrix4d matrix() const;
  static RigidTransform from_matrix(const Eigen::Matrix4d& m);

  /// Largest deviation from R^T R = I and det(R) = +1.
  double orthonormality_error() const;

  /// Nearest orthonormal rotation (polar decomposition), det forced to +1.
  RigidTransform orthonormalized() const;
};

/// a then-applied-after b: result maps p to a(b(p)).
RigidTransform compose(const RigidTransform& a, const RigidTransform& b);

RigidTransform inverse(const RigidTransform& t);

/// Relative transform between two tool poses, expressed frame j <- frame i.
/// Independent of any common left-multiplied world-space transform.
RigidTransform ground_truth_relative(const RigidTransform& world_from_i,
                                     const RigidTransform& world_from_j);

/// Minimal 6-DoF parameterization: intrinsic Z-then-Y-then-X Euler angles
/// (radians) plus translation (mm). Matches the 6-wide network output.
struct Pose6DoF {
  Eigen::Vector3d euler = Eigen::Vector3d::Zero();  // (z, y, x) order
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
};

RigidTransform pose_to_transform(const Pose6DoF& p);

/// Throws NumericalError when pitch is within 1e-6 rad of +-pi/2.
Pose6DoF transform_to_pose(const RigidTransform& t);

/// Homogeneous points (w = 1), coordinates in mm.
struct PointSet {
  std::vector<Eigen::Vector4d> points;

  std::size_t size() const { return points.size(); }
};

PointSet apply(const RigidTransform& t, const PointSet& pts);

/// The four image corners at pixel centers (0,0), (W-1,0), (0,H-1),
/// (W-1,H-1), scaled to mm; image plane is z = 0.
PointSet corner_points(int width_px, int height_px, double spacing_mm);

}  // namespace freescan::geometry
