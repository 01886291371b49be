#pragma once

#include <array>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "mcatlas/types.hpp"

namespace mca {

enum class PairStrategy { Neighbors, Random };

std::string to_string(PairStrategy s);
PairStrategy parse_pair_strategy(const std::string& s);

struct PairSet {
  std::vector<std::pair<int, int>> pairs;
  PairStrategy strategy = PairStrategy::Neighbors;
  int delta = 1;
};

struct TriangleMesh {
  PointSet vertices;
  std::vector<std::array<int, 3>> faces;
};

// n samples with patches assigned round-robin (sample i -> patch i mod M) and
// uv i.i.d. uniform on [0,1]^2.
std::vector<UvSample> sample_uv_uniform(int n, int patches, Rng& rng);

// Observer for accepted relaxation moves: (point index, old nearest distance,
// new nearest distance).
using RelaxObserver = std::function<void(int, double, double)>;

// "As regular as possible" 2D points: random start, then 250 sweeps in which
// every point proposes a move of length `step` (1/(4 sqrt n), decayed by 0.994
// per sweep) in a random direction, accepted iff its nearest-neighbor
// distance grows. Proposals leaving [0,1]^2 are rejected.
std::vector<Vec2> sample_uv_regular(int n, Rng& rng, const RelaxObserver& observer = {});

// Ordered frame pairs (i != j). Neighbors: uniform over 0 < |i-j| <= delta.
// Random: uniform over all ordered distinct pairs. Draws with replacement.
PairSet sample_training_pairs(int frames, int delta, PairStrategy strategy, int count, Rng& rng);

// Area-proportional triangle choice, uniform barycentric sampling inside.
PointSet sample_mesh_surface(const TriangleMesh& mesh, int n, Rng& rng);

// Triangle-index variant used by tests to check per-triangle allocation.
PointSet sample_mesh_surface(const TriangleMesh& mesh, int n, Rng& rng, std::vector<int>* triangle_of_point);

}  // namespace mca
