#include "freescan/geometry.hpp"

#include <cmath>

namespace freescan::geometry {

Eigen::Matrix4d RigidTransform::matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.block<3, 3>(0, 0) = rotation;
  m.block<3, 1>(0, 3) = translation;
  return m;
}

RigidTransform RigidTransform::from_matrix(const Eigen::Matrix4d& m) {
  RigidTransform t;
  t.rotation = m.block<3, 3>(0, 0);
  t.translation = m.block<3, 1>(0, 3);
  return t;
}

double RigidTransform::orthonormality_error() const {
  const Eigen::Matrix3d gram =
      rotation.transpose() * rotation - Eigen::Matrix3d::Identity();
  const double det_err = std::abs(rotation.determinant() - 1.0);
  return std::max(gram.cwiseAbs().maxCoeff(), det_err);
}

RigidTransform RigidTransform::orthonormalized() const {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(
      rotation, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d u = svd.matrixU();
  const Eigen::Matrix3d v = svd.matrixV();
  if ((u * v.transpose()).determinant() < 0.0) {
    u.col(2) = -u.col(2);
  }
  RigidTransform t;
  t.rotation = u * v.transpose();
  t.translation = translation;
  return t;
}

RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
  RigidTransform t;
  t.rotation = a.rotation * b.rotation;
  t.translation = a.rotation * b.translation + a.translation;
  return t;
}

RigidTransform inverse(const RigidTransform& t) {
  RigidTransform inv;
  inv.rotation = t.rotation.transpose();
  inv.translation = -(inv.rotation * t.translation);
  return inv;
}

RigidTransform ground_truth_relative(const RigidTransform& world_from_i,
                                     const RigidTransform& world_from_j) {
  return compose(inverse(world_from_j), world_from_i);
}

RigidTransform pose_to_transform(const Pose6DoF& p) {
  const double cz = std::cos(p.euler[0]), sz = std::sin(p.euler[0]);
  const double cy = std::cos(p.euler[1]), sy = std::sin(p.euler[1]);
  const double cx = std::cos(p.euler[2]), sx = std::sin(p.euler[2]);
  Eigen::Matrix3d rz, ry, rx;
  rz << cz, -sz, 0, sz, cz, 0, 0, 0, 1;
  ry << cy, 0, sy, 0, 1, 0, -sy, 0, cy;
  rx << 1, 0, 0, 0, cx, -sx, 0, sx, cx;
  RigidTransform t;
  t.rotation = rz * ry * rx;
  t.translation = p.translation;
  return t;
}

Pose6DoF transform_to_pose(const RigidTransform& t) {
  const Eigen::Matrix3d& r = t.rotation;
  const double sy = -r(2, 0);
  const double clamped = std::clamp(sy, -1.0, 1.0);
  const double pitch = std::asin(clamped);
  if (M_PI_2 - std::abs(pitch) < 1e-6) {
    throw NumericalError(
        "transform_to_pose: pitch within 1e-6 rad of gimbal lock");
  }
  Pose6DoF p;
  p.euler[0] = std::atan2(r(1, 0), r(0, 0));
  p.euler[1] = pitch;
  p.euler[2] = std::atan2(r(2, 1), r(2, 2));
  p.translation = t.translation;
  return p;
}

PointSet apply(const RigidTransform& t, const PointSet& pts) {
  const Eigen::Matrix4d m = t.matrix();
  PointSet out;
  out.points.reserve(pts.points.size());
  for (const auto& p : pts.points) {
    out.points.push_back(m * p);
    out.points.back()[3] = 1.0;  // rigid maps preserve w; pin it exactly
  }
  return out;
}

PointSet corner_points(int width_px, int height_px, double spacing_mm) {
  if (width_px < 2 || height_px < 2) {
    throw ConfigError("corner_points: width and height must be >= 2");
  }
  if (!(spacing_mm > 0.0)) {
    throw ConfigError("corner_points: spacing must be positive");
  }
  const double w = (width_px - 1) * spacing_mm;
  const double h = (height_px - 1) * spacing_mm;
  PointSet s;
  s.points = {Eigen::Vector4d(0, 0, 0, 1), Eigen::Vector4d(w, 0, 0, 1),
              Eigen::Vector4d(0, h, 0, 1), Eigen::Vector4d(w, h, 0, 1)};
  return s;
}

}  // namespace freescan::geometry
