#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <vector>

#include "freescan/common.hpp"

namespace freescan::nn {

/// Dense row-major matrix of float or double; the only tensor shape the
/// tape works with. Images are packed one sample per row. Storage is kept
/// 64-byte aligned so Eigen picks the same vectorized kernel path for every
/// allocation; training stays bit-reproducible run to run.
template <class S>
struct Mat {
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  std::vector<S, Eigen::aligned_allocator<S>> v;

  Mat() = default;
  Mat(std::int64_t r, std::int64_t c)
      : rows(r), cols(c), v(static_cast<std::size_t>(r * c), S(0)) {}

  static Mat zeros(std::int64_t r, std::int64_t c) { return Mat(r, c); }

  std::int64_t size() const { return rows * cols; }
  S& operator()(std::int64_t r, std::int64_t c) {
    return v[static_cast<std::size_t>(r * cols + c)];
  }
  S operator()(std::int64_t r, std::int64_t c) const {
    return v[static_cast<std::size_t>(r * cols + c)];
  }

  using EMat =
      Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<EMat> map() { return {v.data(), rows, cols}; }
  Eigen::Map<const EMat> map() const { return {v.data(), rows, cols}; }

  bool all_finite() const {
    for (S x : v) {
      if (!std::isfinite(static_cast<double>(x))) return false;
    }
    return true;
  }

  template <class T>
  Mat<T> cast() const {
    Mat<T> out(rows, cols);
    for (std::size_t i = 0; i < v.size(); ++i) {
      out.v[i] = static_cast<T>(v[i]);
    }
    return out;
  }
};

}  // namespace freescan::nn
