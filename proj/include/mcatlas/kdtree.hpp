#pragma once

#include <cstdint>
#include <vector>

#include "mcatlas/types.hpp"

namespace mca {

// Exact nearest-neighbor index over a fixed 3D point set.
// Ties on squared distance resolve to the lowest point index, so results are
// identical to a linear scan.
class KdTree {
 public:
  struct Hit {
    Eigen::Index index = -1;
    double squared_distance = 0.0;
  };

  KdTree() = default;
  explicit KdTree(const PointSet& points);

  Hit nearest(const Vec3& query) const;
  std::vector<Hit> nearest_all(const PointSet& queries) const;
  // Number of points with squared distance strictly below `squared_radius`.
  Eigen::Index count_within(const Vec3& query, double squared_radius) const;

  Eigen::Index size() const { return points_.rows(); }
  bool empty() const { return points_.rows() == 0; }
  const PointSet& points() const { return points_; }

 private:
  struct Node {
    int axis = -1;  // -1: leaf
    double split = 0.0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    std::int32_t begin = 0;  // leaf range in order_
    std::int32_t end = 0;
  };

  std::int32_t build(std::int32_t begin, std::int32_t end);
  void search(std::int32_t node, const Vec3& q, Hit& best) const;
  Eigen::Index count(std::int32_t node, const Vec3& q, double r2) const;

  PointSet points_;
  std::vector<Eigen::Index> order_;
  std::vector<Node> nodes_;
};

// Linear-scan nearest neighbor with the same tie rule; throws on empty targets.
KdTree::Hit nearest_linear(const PointSet& targets, const Vec3& query);

}  // namespace mca
