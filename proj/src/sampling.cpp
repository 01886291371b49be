#include "mcatlas/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace mca {

std::string to_string(PairStrategy s) {
  return s == PairStrategy::Neighbors ? "neighbors" : "random";
}

PairStrategy parse_pair_strategy(const std::string& s) {
  if (s == "neighbors") return PairStrategy::Neighbors;
  if (s == "random") return PairStrategy::Random;
  throw std::invalid_argument("unknown pair strategy '" + s + "' (expected neighbors|random)");
}

std::vector<UvSample> sample_uv_uniform(int n, int patches, Rng& rng) {
  if (n < 1) throw std::invalid_argument("sample_uv_uniform: n must be >= 1");
  if (patches < 1) throw std::invalid_argument("sample_uv_uniform: patch count must be >= 1");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<UvSample> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    auto& s = out[static_cast<std::size_t>(i)];
    s.patch = i % patches;
    const double u = unit(rng);
    const double v = unit(rng);
    s.uv = Vec2(u, v);
  }
  return out;
}

namespace {

double nearest_distance(const std::vector<Vec2>& pts, std::size_t self, const Vec2& at) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < pts.size(); ++j) {
    if (j == self) continue;
    best = std::min(best, (at - pts[j]).squaredNorm());
  }
  return std::sqrt(best);
}

}  // namespace

std::vector<Vec2> sample_uv_regular(int n, Rng& rng, const RelaxObserver& observer) {
  if (n < 1) throw std::invalid_argument("sample_uv_regular: n must be >= 1");
  constexpr int kSweeps = 250;
  constexpr double kDecay = 0.994;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);

  std::vector<Vec2> pts(static_cast<std::size_t>(n));
  for (auto& p : pts) {
    const double u = unit(rng);
    const double v = unit(rng);
    p = Vec2(u, v);
  }
  double step = 1.0 / (4.0 * std::sqrt(static_cast<double>(n)));
  for (int sweep = 0; sweep < kSweeps; ++sweep) {
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const double d = nearest_distance(pts, i, pts[i]);
      const double a = angle(rng);
      const Vec2 proposal = pts[i] + step * Vec2(std::cos(a), std::sin(a));
      if (proposal.x() < 0.0 || proposal.x() > 1.0 || proposal.y() < 0.0 || proposal.y() > 1.0) continue;
      const double d_new = nearest_distance(pts, i, proposal);
      if (d_new > d) {
        pts[i] = proposal;
        if (observer) observer(static_cast<int>(i), d, d_new);
      }
    }
    step *= kDecay;
  }
  return pts;
}

PairSet sample_training_pairs(int frames, int delta, PairStrategy strategy, int count, Rng& rng) {
  if (frames < 2) throw std::invalid_argument("pair sampling needs at least 2 frames");
  if (delta < 1) throw std::invalid_argument("pair sampling window delta must be >= 1");
  if (count < 0) throw std::invalid_argument("pair count must be >= 0");
  PairSet out;
  out.strategy = strategy;
  out.delta = delta;
  out.pairs.reserve(static_cast<std::size_t>(count));
  if (strategy == PairStrategy::Random) {
    std::uniform_int_distribution<int> first(0, frames - 1);
    std::uniform_int_distribution<int> other(0, frames - 2);
    for (int k = 0; k < count; ++k) {
      const int i = first(rng);
      int j = other(rng);
      if (j >= i) ++j;
      out.pairs.emplace_back(i, j);
    }
    return out;
  }
  std::vector<std::pair<int, int>> admissible;
  for (int i = 0; i < frames; ++i) {
    for (int j = std::max(0, i - delta); j <= std::min(frames - 1, i + delta); ++j) {
      if (j != i) admissible.emplace_back(i, j);
    }
  }
  std::uniform_int_distribution<std::size_t> pick(0, admissible.size() - 1);
  for (int k = 0; k < count; ++k) out.pairs.push_back(admissible[pick(rng)]);
  return out;
}

PointSet sample_mesh_surface(const TriangleMesh& mesh, int n, Rng& rng) {
  return sample_mesh_surface(mesh, n, rng, nullptr);
}

PointSet sample_mesh_surface(const TriangleMesh& mesh, int n, Rng& rng, std::vector<int>* triangle_of_point) {
  if (n < 0) throw std::invalid_argument("sample count must be >= 0");
  std::vector<double> cumulative;
  cumulative.reserve(mesh.faces.size());
  double total = 0.0;
  for (const auto& f : mesh.faces) {
    for (int v : f) {
      if (v < 0 || v >= mesh.vertices.rows()) throw std::invalid_argument("face references a missing vertex");
    }
    const Vec3 a = mesh.vertices.row(f[0]).transpose();
    const Vec3 b = mesh.vertices.row(f[1]).transpose();
    const Vec3 c = mesh.vertices.row(f[2]).transpose();
    total += 0.5 * (b - a).cross(c - a).norm();
    cumulative.push_back(total);
  }
  if (!(total > 0.0)) throw std::invalid_argument("mesh has zero total area");

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  PointSet out(n, 3);
  if (triangle_of_point) triangle_of_point->assign(static_cast<std::size_t>(n), -1);
  for (int i = 0; i < n; ++i) {
    const double r = unit(rng) * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), r);
    if (it == cumulative.end()) --it;
    // Zero-area faces share a cumulative value with their predecessor and are never chosen.
    const auto t = static_cast<std::size_t>(it - cumulative.begin());
    const auto& f = mesh.faces[t];
    const double s = std::sqrt(unit(rng));
    const double w = unit(rng);
    const Vec3 a = mesh.vertices.row(f[0]).transpose();
    const Vec3 b = mesh.vertices.row(f[1]).transpose();
    const Vec3 c = mesh.vertices.row(f[2]).transpose();
    const Vec3 p = (1.0 - s) * a + s * (1.0 - w) * b + s * w * c;
    out.row(i) = p.transpose();
    if (triangle_of_point) (*triangle_of_point)[static_cast<std::size_t>(i)] = static_cast<int>(t);
  }
  return out;
}

}  // namespace mca
