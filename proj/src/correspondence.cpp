#include "mcatlas/correspondence.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_map>

#include "mcatlas/errors.hpp"
#include "mcatlas/sampling.hpp"

namespace mca {

std::vector<double> patch_areas(const AtlasModel& model, const Latent& z, Rng& rng, int samples_per_patch) {
  if (samples_per_patch < 256) throw std::invalid_argument("patch_areas: need at least 256 samples per patch");
  const int m = model.patches();
  const std::vector<UvSample> uv = sample_uv_uniform(samples_per_patch * m, m, rng);
  const std::vector<SurfaceSample> s = decode_with_jacobian(model, z, uv);
  std::vector<double> sum(static_cast<std::size_t>(m), 0.0);
  std::vector<int> count(static_cast<std::size_t>(m), 0);
  for (const auto& x : s) {
    const double det = x.metric.determinant();
    sum[static_cast<std::size_t>(x.uv.patch)] += std::sqrt(std::max(det, 0.0));
    count[static_cast<std::size_t>(x.uv.patch)] += 1;
  }
  for (std::size_t k = 0; k < sum.size(); ++k) sum[k] /= static_cast<double>(count[k]);
  return sum;
}

std::vector<int> filter_patches(std::span<const double> areas, double ratio) {
  if (areas.empty()) throw std::invalid_argument("filter_patches: no patches");
  const double mean = std::accumulate(areas.begin(), areas.end(), 0.0) / static_cast<double>(areas.size());
  std::vector<int> active;
  if (mean > 0.0 && std::isfinite(mean)) {
    for (std::size_t k = 0; k < areas.size(); ++k) {
      if (areas[k] >= ratio * mean) active.push_back(static_cast<int>(k));
    }
  }
  if (active.empty()) throw NumericalError("degenerate model: every patch has collapsed to zero area");
  return active;
}

UvLayout regular_uv_layout(std::span<const double> areas, int n, Rng& rng) {
  UvLayout layout;
  layout.patch_areas.assign(areas.begin(), areas.end());
  layout.active_patches = filter_patches(areas);
  const int active = static_cast<int>(layout.active_patches.size());
  if (n < active) {
    throw std::invalid_argument("need at least one sample per active patch (" + std::to_string(active) + ")");
  }
  layout.samples.reserve(static_cast<std::size_t>(n));
  for (int a = 0; a < active; ++a) {
    const int count = n / active + (a < n % active ? 1 : 0);
    for (const Vec2& uv : sample_uv_regular(count, rng)) {
      layout.samples.push_back(UvSample{layout.active_patches[static_cast<std::size_t>(a)], uv});
    }
  }
  return layout;
}

UvLayout sequence_uv_layout(const AtlasModel& model, std::span<const Latent> latents, int n, Rng& rng,
                            int area_samples) {
  if (latents.empty()) throw std::invalid_argument("sequence_uv_layout: no frames");
  std::vector<double> mean(static_cast<std::size_t>(model.patches()), 0.0);
  for (const auto& z : latents) {
    const std::vector<double> a = patch_areas(model, z, rng, area_samples);
    for (std::size_t k = 0; k < a.size(); ++k) mean[k] += a[k];
  }
  for (double& a : mean) a /= static_cast<double>(latents.size());
  return regular_uv_layout(mean, n, rng);
}

PointSet SurfaceSampleSet::points() const {
  PointSet p(static_cast<Eigen::Index>(samples.size()), 3);
  for (std::size_t i = 0; i < samples.size(); ++i) p.row(static_cast<Eigen::Index>(i)) = samples[i].point.transpose();
  return p;
}

SurfaceSampleSet surface_samples_from_layout(const AtlasModel& model, const Latent& z, const UvLayout& layout,
                                             int frame) {
  SurfaceSampleSet out;
  out.frame = frame;
  out.samples = decode_with_jacobian(model, z, layout.samples);
  out.active_patches = layout.active_patches;
  out.patch_areas = layout.patch_areas;
  return out;
}

SurfaceSampleSet build_surface_samples(const AtlasModel& model, const Latent& z, int n, int frame, Rng& rng,
                                       int area_samples) {
  const std::vector<double> areas = patch_areas(model, z, rng, area_samples);
  return surface_samples_from_layout(model, z, regular_uv_layout(areas, n, rng), frame);
}

Eigen::Index project_nearest(const Vec3& query, const KdTree& targets) {
  return targets.nearest(query).index;
}

Eigen::Index project_nearest(const Vec3& query, const PointSet& targets) {
  return nearest_linear(targets, query).index;
}

CorrespondenceMap map_correspondence(const PointSet& source, const PointSet& target,
                                     const SurfaceSampleSet& source_samples,
                                     const SurfaceSampleSet& target_samples) {
  const auto& a = source_samples.samples;
  const auto& b = target_samples.samples;
  if (a.size() != b.size()) throw std::invalid_argument("map_correspondence: sample sets differ in size");
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (!(a[k].uv == b[k].uv)) {
      throw std::invalid_argument("map_correspondence: sample sets use different UV tokens (index " +
                                  std::to_string(k) + ")");
    }
  }
  if (a.empty() || target.rows() == 0) throw std::invalid_argument("map_correspondence: empty input");

  const KdTree source_index(source_samples.points());
  const KdTree target_index(target);
  CorrespondenceMap map;
  map.source = source_samples.frame;
  map.target = target_samples.frame;
  map.target_index.resize(static_cast<std::size_t>(source.rows()));
  std::vector<Eigen::Index> cache(b.size(), -1);
  for (Eigen::Index r = 0; r < source.rows(); ++r) {
    const auto token = static_cast<std::size_t>(source_index.nearest(source.row(r).transpose()).index);
    if (cache[token] < 0) cache[token] = target_index.nearest(b[token].point).index;
    map.target_index[static_cast<std::size_t>(r)] = cache[token];
  }
  return map;
}

std::vector<Eigen::Index> ground_truth_targets(std::span<const int> source_ids, std::span<const int> target_ids) {
  std::unordered_map<int, Eigen::Index> first;
  for (std::size_t k = 0; k < target_ids.size(); ++k) first.emplace(target_ids[k], static_cast<Eigen::Index>(k));
  std::vector<Eigen::Index> out(source_ids.size(), -1);
  for (std::size_t k = 0; k < source_ids.size(); ++k) {
    const auto it = first.find(source_ids[k]);
    if (it != first.end()) out[k] = it->second;
  }
  return out;
}

void attach_ground_truth(CorrespondenceMap& map, const PointSet& target, std::span<const Eigen::Index> truth) {
  if (truth.size() != map.target_index.size()) {
    throw std::invalid_argument("attach_ground_truth: one truth entry per source point required");
  }
  map.squared_error.resize(truth.size());
  for (std::size_t k = 0; k < truth.size(); ++k) {
    map.squared_error[k] = truth[k] < 0 ? std::numeric_limits<double>::quiet_NaN()
                                        : squared_distance(target.row(map.target_index[k]).transpose(),
                                                           target.row(truth[k]).transpose());
  }
}

}  // namespace mca
