#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "freescan/geometry.hpp"

namespace freescan::testsupport {

// Independent 4x4 homogeneous multiply; the oracle for transform
// composition. Plain loops on purpose.
inline Eigen::Matrix4d mat4_mul_oracle(const Eigen::Matrix4d& a,
                                       const Eigen::Matrix4d& b) {
  Eigen::Matrix4d c = Eigen::Matrix4d::Zero();
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      double acc = 0.0;
      for (int k = 0; k < 4; ++k) acc += a(i, k) * b(k, j);
      c(i, j) = acc;
    }
  }
  return c;
}

// Independent Euler Z-Y-X to rotation matrix, written out elementwise.
inline Eigen::Matrix3d euler_zyx_oracle(double z, double y, double x) {
  const double cz = std::cos(z), sz = std::sin(z);
  const double cy = std::cos(y), sy = std::sin(y);
  const double cx = std::cos(x), sx = std::sin(x);
  Eigen::Matrix3d r;
  r(0, 0) = cz * cy;
  r(0, 1) = cz * sy * sx - sz * cx;
  r(0, 2) = cz * sy * cx + sz * sx;
  r(1, 0) = sz * cy;
  r(1, 1) = sz * sy * sx + cz * cx;
  r(1, 2) = sz * sy * cx - cz * sx;
  r(2, 0) = -sy;
  r(2, 1) = cy * sx;
  r(2, 2) = cy * cx;
  return r;
}

inline geometry::RigidTransform random_transform(std::mt19937_64& rng,
                                                 double max_angle = 1.2,
                                                 double max_offset = 50.0) {
  std::uniform_real_distribution<double> ang(-max_angle, max_angle);
  std::uniform_real_distribution<double> off(-max_offset, max_offset);
  geometry::Pose6DoF p;
  p.euler = Eigen::Vector3d(ang(rng), ang(rng), ang(rng));
  p.translation = Eigen::Vector3d(off(rng), off(rng), off(rng));
  return geometry::pose_to_transform(p);
}

inline double max_abs_diff(const Eigen::Matrix4d& a, const Eigen::Matrix4d& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

inline double transform_diff(const geometry::RigidTransform& a,
                             const geometry::RigidTransform& b) {
  return max_abs_diff(a.matrix(), b.matrix());
}

inline double spearman_rho(const std::vector<double>& xs,
                           const std::vector<double>& ys) {
  const std::size_t n = xs.size();
  auto ranks = [n](const std::vector<double>& v) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(n);
    for (std::size_t k = 0; k < n; ++k) r[idx[k]] = static_cast<double>(k);
    return r;
  };
  const auto rx = ranks(xs);
  const auto ry = ranks(ys);
  double mx = 0, my = 0;
  for (std::size_t k = 0; k < n; ++k) {
    mx += rx[k];
    my += ry[k];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t k = 0; k < n; ++k) {
    sxy += (rx[k] - mx) * (ry[k] - my);
    sxx += (rx[k] - mx) * (rx[k] - mx);
    syy += (ry[k] - my) * (ry[k] - my);
  }
  if (sxx == 0 || syy == 0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

inline double pearson(const std::vector<float>& a, const std::vector<float>& b) {
  const std::size_t n = a.size();
  double ma = 0, mb = 0;
  for (std::size_t k = 0; k < n; ++k) {
    ma += a[k];
    mb += b[k];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t k = 0; k < n; ++k) {
    sab += (a[k] - ma) * (b[k] - mb);
    saa += (a[k] - ma) * (a[k] - ma);
    sbb += (b[k] - mb) * (b[k] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace freescan::testsupport
