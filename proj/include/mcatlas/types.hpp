#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <vector>

namespace mca {

// n x 3 matrix, one point per row.
using PointSet = Eigen::Matrix<double, Eigen::Dynamic, 3>;
using Vec3 = Eigen::Vector3d;
using Vec2 = Eigen::Vector2d;
using Mat32 = Eigen::Matrix<double, 3, 2>;
using Mat2 = Eigen::Matrix2d;

using Rng = std::mt19937_64;

// A point of the canonical parameter domain: patch index plus (u, v) in [0,1]^2.
struct UvSample {
  int patch = 0;
  Vec2 uv = Vec2::Zero();

  friend bool operator==(const UvSample& a, const UvSample& b) {
    return a.patch == b.patch && a.uv == b.uv;
  }
};

// Image of one UV sample under one frame's atlas.
struct SurfaceSample {
  UvSample uv;
  Vec3 point = Vec3::Zero();
  Mat32 jacobian = Mat32::Zero();
  Mat2 metric = Mat2::Zero();
};

inline double squared_distance(const Vec3& a, const Vec3& b) {
  const double dx = a.x() - b.x();
  const double dy = a.y() - b.y();
  const double dz = a.z() - b.z();
  return dx * dx + dy * dy + dz * dz;
}

}  // namespace mca
