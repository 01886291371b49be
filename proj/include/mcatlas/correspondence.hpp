#pragma once

#include <span>
#include <vector>

#include "mcatlas/atlas_model.hpp"
#include "mcatlas/kdtree.hpp"
#include "mcatlas/types.hpp"

namespace mca {

// Monte Carlo area of every patch: mean of sqrt(det g) over `samples_per_patch`
// uniform UV points (at least 256).
std::vector<double> patch_areas(const AtlasModel& model, const Latent& z, Rng& rng,
                                int samples_per_patch = 1024);

// Patches whose area is at least `ratio` times the mean area, in index order.
// Throws NumericalError when none survive.
std::vector<int> filter_patches(std::span<const double> areas, double ratio = 1e-3);

// Shared canonical sample tokens: n points split over the active patches as
// evenly as possible (the first n mod |active| patches get one extra), each
// patch laid out with sample_uv_regular.
struct UvLayout {
  std::vector<UvSample> samples;
  std::vector<int> active_patches;
  std::vector<double> patch_areas;
};

UvLayout regular_uv_layout(std::span<const double> areas, int n, Rng& rng);

// Layout from per-patch areas averaged over all given latent codes.
UvLayout sequence_uv_layout(const AtlasModel& model, std::span<const Latent> latents, int n, Rng& rng,
                            int area_samples = 1024);

struct SurfaceSampleSet {
  int frame = 0;
  std::vector<SurfaceSample> samples;
  std::vector<int> active_patches;
  std::vector<double> patch_areas;

  PointSet points() const;
};

SurfaceSampleSet surface_samples_from_layout(const AtlasModel& model, const Latent& z, const UvLayout& layout,
                                             int frame);

// Filters and lays out this frame's own patches, then decodes them.
SurfaceSampleSet build_surface_samples(const AtlasModel& model, const Latent& z, int n, int frame, Rng& rng,
                                       int area_samples = 1024);

Eigen::Index project_nearest(const Vec3& query, const KdTree& targets);
Eigen::Index project_nearest(const Vec3& query, const PointSet& targets);

struct CorrespondenceMap {
  int source = 0;
  int target = 0;
  std::vector<Eigen::Index> target_index;  // one per source point
  std::vector<double> squared_error;       // empty without ground truth
};

// p -> nearest sample of frame i -> same token in frame j -> nearest point of P_j.
// Throws std::invalid_argument when the two sample sets use different tokens.
CorrespondenceMap map_correspondence(const PointSet& source, const PointSet& target,
                                     const SurfaceSampleSet& source_samples,
                                     const SurfaceSampleSet& target_samples);

// For each source point, the lowest-index target point with the same id, or -1.
std::vector<Eigen::Index> ground_truth_targets(std::span<const int> source_ids, std::span<const int> target_ids);

// Fills squared_error from ground-truth targets (-1 entries become NaN).
void attach_ground_truth(CorrespondenceMap& map, const PointSet& target,
                         std::span<const Eigen::Index> truth);

}  // namespace mca
