#include "mcatlas/kdtree.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace mca {

namespace {

constexpr std::int32_t kLeafSize = 8;

bool better(double d, Eigen::Index i, const KdTree::Hit& best) {
  return d < best.squared_distance || (d == best.squared_distance && i < best.index);
}

}  // namespace

KdTree::KdTree(const PointSet& points) : points_(points) {
  order_.resize(static_cast<std::size_t>(points_.rows()));
  for (Eigen::Index i = 0; i < points_.rows(); ++i) order_[static_cast<std::size_t>(i)] = i;
  if (points_.rows() > 0) build(0, static_cast<std::int32_t>(points_.rows()));
}

std::int32_t KdTree::build(std::int32_t begin, std::int32_t end) {
  const auto id = static_cast<std::int32_t>(nodes_.size());
  nodes_.push_back(Node{});
  if (end - begin <= kLeafSize) {
    nodes_[static_cast<std::size_t>(id)].begin = begin;
    nodes_[static_cast<std::size_t>(id)].end = end;
    return id;
  }
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (std::int32_t k = begin; k < end; ++k) {
    const Vec3 p = points_.row(order_[static_cast<std::size_t>(k)]).transpose();
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  const std::int32_t mid = begin + (end - begin) / 2;
  auto first = order_.begin() + begin;
  std::nth_element(first, order_.begin() + mid, order_.begin() + end,
                   [&](Eigen::Index a, Eigen::Index b) { return points_(a, axis) < points_(b, axis); });
  const double split = points_(order_[static_cast<std::size_t>(mid)], axis);
  const std::int32_t left = build(begin, mid);
  const std::int32_t right = build(mid, end);
  Node& n = nodes_[static_cast<std::size_t>(id)];
  n.axis = axis;
  n.split = split;
  n.left = left;
  n.right = right;
  return id;
}

// Invariant: points in `left` have coordinate <= split, points in `right` >= split.
void KdTree::search(std::int32_t id, const Vec3& q, Hit& best) const {
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.axis < 0) {
    for (std::int32_t k = n.begin; k < n.end; ++k) {
      const Eigen::Index i = order_[static_cast<std::size_t>(k)];
      const double d = squared_distance(q, points_.row(i).transpose());
      if (better(d, i, best)) best = Hit{i, d};
    }
    return;
  }
  const double diff = q[n.axis] - n.split;
  const std::int32_t near = diff <= 0.0 ? n.left : n.right;
  const std::int32_t far = diff <= 0.0 ? n.right : n.left;
  search(near, q, best);
  if (diff * diff <= best.squared_distance) search(far, q, best);
}

KdTree::Hit KdTree::nearest(const Vec3& query) const {
  if (empty()) throw std::invalid_argument("nearest-neighbor query on an empty point set");
  Hit best{-1, std::numeric_limits<double>::infinity()};
  search(0, query, best);
  return best;
}

std::vector<KdTree::Hit> KdTree::nearest_all(const PointSet& queries) const {
  std::vector<Hit> out;
  out.reserve(static_cast<std::size_t>(queries.rows()));
  for (Eigen::Index i = 0; i < queries.rows(); ++i) out.push_back(nearest(Vec3(queries.row(i).transpose())));
  return out;
}

Eigen::Index KdTree::count(std::int32_t id, const Vec3& q, double r2) const {
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.axis < 0) {
    Eigen::Index c = 0;
    for (std::int32_t k = n.begin; k < n.end; ++k) {
      if (squared_distance(q, points_.row(order_[static_cast<std::size_t>(k)]).transpose()) < r2) ++c;
    }
    return c;
  }
  const double diff = q[n.axis] - n.split;
  Eigen::Index c = count(diff <= 0.0 ? n.left : n.right, q, r2);
  if (diff * diff < r2) c += count(diff <= 0.0 ? n.right : n.left, q, r2);
  return c;
}

Eigen::Index KdTree::count_within(const Vec3& query, double squared_radius) const {
  if (empty() || !(squared_radius > 0.0)) return 0;
  return count(0, query, squared_radius);
}

KdTree::Hit nearest_linear(const PointSet& targets, const Vec3& query) {
  if (targets.rows() == 0) throw std::invalid_argument("nearest-neighbor query on an empty point set");
  KdTree::Hit best{-1, std::numeric_limits<double>::infinity()};
  for (Eigen::Index i = 0; i < targets.rows(); ++i) {
    const double d = squared_distance(query, targets.row(i).transpose());
    if (better(d, i, best)) best = KdTree::Hit{i, d};
  }
  return best;
}

}  // namespace mca
