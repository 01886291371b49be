#pragma once

#include <map>
#include <span>
#include <utility>
#include <vector>

#include "mcatlas/atlas_model.hpp"
#include "mcatlas/autodiff.hpp"
#include "mcatlas/kdtree.hpp"
#include "mcatlas/types.hpp"

namespace mca {

struct LossBreakdown {
  double chamfer = 0.0;
  double metric = 0.0;  // already weighted by alpha_mc
  double total = 0.0;
  double alpha_mc = 0.0;
};

// Mean squared nearest-neighbor distance surface -> cloud plus cloud -> surface.
double chamfer_distance(const PointSet& surface, const PointSet& cloud);

// chamfer_distance averaged over frames.
double chamfer_loss(std::span<const PointSet> surfaces, std::span<const PointSet> clouds);

// Monte Carlo metric-consistency energy (1/n) sum ||g_a(p) - g_b(p)||_F^2 over
// samples taken at the same UV tokens.
double metric_consistency(std::span<const SurfaceSample> a, std::span<const SurfaceSample> b);

// --- graph-level terms -----------------------------------------------------

// Chamfer term of one frame. Nearest-neighbor assignments are taken from the
// current (evaluated) value of `surface` and held constant.
ad::NodeId chamfer_term(ad::Graph& graph, ad::NodeId surface, const PointSet& cloud,
                        const KdTree& cloud_index);

struct JacobianNodes {
  ad::NodeId du = ad::kNoNode;
  ad::NodeId dv = ad::kNoNode;
};

// Metric-consistency term between two n x 3 Jacobian-column pairs.
ad::NodeId metric_consistency_term(ad::Graph& graph, const JacobianNodes& a, const JacobianNodes& b);

// One optimization batch. Every pair shares one UV list between its two
// frames. Frames that appear in no pair need an entry in `frame_uv`.
struct TrainingBatch {
  std::vector<int> frames;
  std::vector<std::pair<int, int>> pairs;
  std::vector<std::vector<UvSample>> pair_uv;
  std::map<int, std::vector<UvSample>> frame_uv;
};

struct BatchLossNodes {
  ad::NodeId chamfer = ad::kNoNode;
  ad::NodeId metric = ad::kNoNode;
  ad::NodeId total = ad::kNoNode;
};

// Latent-code node per frame, encoded from the frame's cloud.
std::map<int, ad::NodeId> encode_frames(AtlasGraph& atlas, std::span<const int> frames,
                                        std::span<const PointSet> clouds);

// Chamfer over the batch's distinct frames (averaged), plus
// alpha_mc * mean over pairs of the metric-consistency energy. Leaves the
// graph evaluated. `clouds`/`indices` are indexed by frame.
BatchLossNodes build_batch_loss(AtlasGraph& atlas, const TrainingBatch& batch,
                                const std::map<int, ad::NodeId>& latents,
                                std::span<const PointSet> clouds, std::span<const KdTree> indices,
                                double alpha_mc);

struct LossAndGradient {
  LossBreakdown loss;
  std::vector<ad::Matrix> gradient;  // aligned with the model's ParameterSet
};

LossBreakdown total_loss(const AtlasModel& model, const TrainingBatch& batch,
                         std::span<const PointSet> clouds, double alpha_mc);
LossAndGradient total_loss_with_gradient(const AtlasModel& model, const TrainingBatch& batch,
                                         std::span<const PointSet> clouds,
                                         std::span<const KdTree> indices, double alpha_mc);

}  // namespace mca
