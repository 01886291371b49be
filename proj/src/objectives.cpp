#include "mcatlas/objectives.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>
#include <string>

namespace mca {

double chamfer_distance(const PointSet& surface, const PointSet& cloud) {
  if (surface.rows() == 0 || cloud.rows() == 0) {
    throw std::invalid_argument("chamfer distance needs non-empty point sets");
  }
  const KdTree cloud_index(cloud);
  const KdTree surface_index(surface);
  double forward = 0.0;
  for (Eigen::Index i = 0; i < surface.rows(); ++i) {
    forward += cloud_index.nearest(surface.row(i).transpose()).squared_distance;
  }
  double backward = 0.0;
  for (Eigen::Index i = 0; i < cloud.rows(); ++i) {
    backward += surface_index.nearest(cloud.row(i).transpose()).squared_distance;
  }
  return forward / static_cast<double>(surface.rows()) + backward / static_cast<double>(cloud.rows());
}

double chamfer_loss(std::span<const PointSet> surfaces, std::span<const PointSet> clouds) {
  if (surfaces.size() != clouds.size() || surfaces.empty()) {
    throw std::invalid_argument("chamfer loss needs one surface per cloud and at least one frame");
  }
  double total = 0.0;
  for (std::size_t k = 0; k < surfaces.size(); ++k) {
    if (surfaces[k].rows() == 0 || clouds[k].rows() == 0) {
      throw std::invalid_argument("chamfer loss: frame " + std::to_string(k) + " is empty");
    }
    total += chamfer_distance(surfaces[k], clouds[k]);
  }
  return total / static_cast<double>(surfaces.size());
}

double metric_consistency(std::span<const SurfaceSample> a, std::span<const SurfaceSample> b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("metric consistency: sample lists differ in length (" +
                                std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
  }
  if (a.empty()) throw std::invalid_argument("metric consistency: no samples");
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!(a[i].uv == b[i].uv)) {
      throw std::invalid_argument("metric consistency: sample " + std::to_string(i) +
                                  " was taken at different UV tokens");
    }
    total += (a[i].metric - b[i].metric).squaredNorm();
  }
  return total / static_cast<double>(a.size());
}

// ---------------------------------------------------------------------------

ad::NodeId chamfer_term(ad::Graph& graph, ad::NodeId surface, const PointSet& cloud,
                        const KdTree& cloud_index) {
  graph.eval();
  const ad::Matrix& s = graph.value(surface);
  if (s.rows() == 0 || s.cols() != 3) throw std::invalid_argument("chamfer term needs an n x 3 surface");
  if (cloud.rows() == 0) throw std::invalid_argument("chamfer term needs a non-empty cloud");

  ad::Matrix targets(s.rows(), 3);
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    targets.row(i) = cloud.row(cloud_index.nearest(s.row(i).transpose()).index);
  }
  const PointSet surface_points = s;
  const KdTree surface_index(surface_points);
  std::vector<Eigen::Index> nearest_surface(static_cast<std::size_t>(cloud.rows()));
  for (Eigen::Index i = 0; i < cloud.rows(); ++i) {
    nearest_surface[static_cast<std::size_t>(i)] = surface_index.nearest(cloud.row(i).transpose()).index;
  }

  const ad::NodeId forward = graph.scale(
      graph.sum(graph.square(graph.sub(surface, graph.constant(std::move(targets))))),
      1.0 / static_cast<double>(s.rows()));
  const ad::NodeId gathered = graph.gather_rows(surface, std::move(nearest_surface));
  const ad::NodeId backward = graph.scale(
      graph.sum(graph.square(graph.sub(gathered, graph.constant(ad::Matrix(cloud))))),
      1.0 / static_cast<double>(cloud.rows()));
  return graph.add(forward, backward);
}

ad::NodeId metric_consistency_term(ad::Graph& graph, const JacobianNodes& a, const JacobianNodes& b) {
  const Eigen::Index n = graph.node(a.du).rows;
  if (graph.node(b.du).rows != n || graph.node(a.dv).rows != n || graph.node(b.dv).rows != n) {
    throw std::invalid_argument("metric consistency term: Jacobian blocks differ in length");
  }
  auto metric = [&](const JacobianNodes& j) {
    return std::array<ad::NodeId, 3>{graph.row_sum(graph.square(j.du)),
                                     graph.row_sum(graph.mul(j.du, j.dv)),
                                     graph.row_sum(graph.square(j.dv))};
  };
  const auto ga = metric(a);
  const auto gb = metric(b);
  const ad::NodeId e11 = graph.square(graph.sub(ga[0], gb[0]));
  const ad::NodeId e12 = graph.scale(graph.square(graph.sub(ga[1], gb[1])), 2.0);
  const ad::NodeId e22 = graph.square(graph.sub(ga[2], gb[2]));
  const ad::NodeId per_point = graph.add(graph.add(e11, e12), e22);
  return graph.scale(graph.sum(per_point), 1.0 / static_cast<double>(n));
}

// ---------------------------------------------------------------------------

std::map<int, ad::NodeId> encode_frames(AtlasGraph& atlas, std::span<const int> frames,
                                        std::span<const PointSet> clouds) {
  std::map<int, ad::NodeId> out;
  for (int f : frames) {
    if (f < 0 || static_cast<std::size_t>(f) >= clouds.size()) {
      throw std::invalid_argument("frame " + std::to_string(f) + " has no cloud");
    }
    if (!out.contains(f)) out[f] = atlas.encode(clouds[static_cast<std::size_t>(f)]);
  }
  return out;
}

namespace {

struct DecodedBlock {
  ad::NodeId points = ad::kNoNode;
  JacobianNodes jacobian;
};

// Decodes a mixed-patch UV list; rows come out grouped by patch (ascending),
// in input order within each patch. The grouping depends only on the UV list,
// so two frames decoded from the same list line up row by row.
DecodedBlock decode_list(AtlasGraph& atlas, const AtlasModel& model, std::span<const UvSample> uv,
                         ad::NodeId z, bool with_jacobian) {
  for (const auto& s : uv) {
    if (s.patch < 0 || s.patch >= model.patches()) {
      throw std::out_of_range("uv sample patch " + std::to_string(s.patch) + " out of range");
    }
  }
  std::vector<ad::NodeId> pts, du, dv;
  for (int k = 0; k < model.patches(); ++k) {
    std::vector<Eigen::Index> rows;
    for (std::size_t i = 0; i < uv.size(); ++i) {
      if (uv[i].patch == k) rows.push_back(static_cast<Eigen::Index>(i));
    }
    if (rows.empty()) continue;
    Eigen::MatrixX2d block(static_cast<Eigen::Index>(rows.size()), 2);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      block.row(static_cast<Eigen::Index>(r)) = uv[static_cast<std::size_t>(rows[r])].uv.transpose();
    }
    const auto d = atlas.decode(k, block, z, with_jacobian);
    pts.push_back(d.points);
    if (with_jacobian) {
      du.push_back(d.du);
      dv.push_back(d.dv);
    }
  }
  ad::Graph& g = atlas.graph();
  auto join = [&](const std::vector<ad::NodeId>& parts) {
    return parts.size() == 1 ? parts.front() : g.concat_rows(parts);
  };
  DecodedBlock out;
  out.points = join(pts);
  if (with_jacobian) out.jacobian = JacobianNodes{join(du), join(dv)};
  return out;
}

}  // namespace

BatchLossNodes build_batch_loss(AtlasGraph& atlas, const TrainingBatch& batch,
                                const std::map<int, ad::NodeId>& latents,
                                std::span<const PointSet> clouds, std::span<const KdTree> indices,
                                double alpha_mc) {
  ad::Graph& g = atlas.graph();
  if (batch.frames.empty()) throw std::invalid_argument("batch has no frames");
  if (batch.pair_uv.size() != batch.pairs.size()) {
    throw std::invalid_argument("batch needs exactly one UV list per pair");
  }
  const std::set<int> frame_set(batch.frames.begin(), batch.frames.end());
  for (const auto& [i, j] : batch.pairs) {
    if (!frame_set.contains(i) || !frame_set.contains(j)) {
      throw std::invalid_argument("pair (" + std::to_string(i) + ", " + std::to_string(j) +
                                  ") references a frame outside the batch");
    }
    if (i == j) throw std::invalid_argument("pair endpoints must differ");
  }
  for (int f : frame_set) {
    if (!latents.contains(f)) throw std::invalid_argument("no latent code for frame " + std::to_string(f));
    if (static_cast<std::size_t>(f) >= clouds.size()) {
      throw std::invalid_argument("frame " + std::to_string(f) + " has no cloud");
    }
  }
  std::map<int, std::vector<ad::NodeId>> surfaces;
  std::vector<std::pair<JacobianNodes, JacobianNodes>> pair_jacobians;
  for (std::size_t p = 0; p < batch.pairs.size(); ++p) {
    const auto& uv = batch.pair_uv[p];
    if (uv.empty()) throw std::invalid_argument("pair UV list is empty");
    const auto [i, j] = batch.pairs[p];
    const DecodedBlock a = decode_list(atlas, atlas.model(), uv, latents.at(i), true);
    const DecodedBlock b = decode_list(atlas, atlas.model(), uv, latents.at(j), true);
    surfaces[i].push_back(a.points);
    surfaces[j].push_back(b.points);
    pair_jacobians.emplace_back(a.jacobian, b.jacobian);
  }
  for (int f : frame_set) {
    if (surfaces.contains(f)) continue;
    auto it = batch.frame_uv.find(f);
    if (it == batch.frame_uv.end() || it->second.empty()) {
      throw std::invalid_argument("frame " + std::to_string(f) + " is in no pair and has no UV list");
    }
    surfaces[f].push_back(decode_list(atlas, atlas.model(), it->second, latents.at(f), false).points);
  }
  g.eval();

  ad::NodeId chamfer = ad::kNoNode;
  for (int f : frame_set) {
    const auto& parts = surfaces[f];
    const ad::NodeId surface = parts.size() == 1 ? parts.front() : g.concat_rows(parts);
    const auto& cloud = clouds[static_cast<std::size_t>(f)];
    ad::NodeId term;
    if (indices.empty()) {
      term = chamfer_term(g, surface, cloud, KdTree(cloud));
    } else {
      term = chamfer_term(g, surface, cloud, indices[static_cast<std::size_t>(f)]);
    }
    chamfer = chamfer == ad::kNoNode ? term : g.add(chamfer, term);
  }
  chamfer = g.scale(chamfer, 1.0 / static_cast<double>(frame_set.size()));

  ad::NodeId metric;
  if (pair_jacobians.empty()) {
    metric = g.constant(ad::Matrix::Zero(1, 1));
  } else {
    ad::NodeId energy = ad::kNoNode;
    for (const auto& [a, b] : pair_jacobians) {
      const ad::NodeId e = metric_consistency_term(g, a, b);
      energy = energy == ad::kNoNode ? e : g.add(energy, e);
    }
    metric = g.scale(energy, alpha_mc / static_cast<double>(pair_jacobians.size()));
  }
  BatchLossNodes out{chamfer, metric, g.add(chamfer, metric)};
  g.eval();
  return out;
}

namespace {

LossBreakdown read_breakdown(const ad::Graph& g, const BatchLossNodes& nodes, double alpha_mc) {
  LossBreakdown l;
  l.chamfer = g.scalar(nodes.chamfer);
  l.metric = g.scalar(nodes.metric);
  l.total = g.scalar(nodes.total);
  l.alpha_mc = alpha_mc;
  return l;
}

}  // namespace

LossBreakdown total_loss(const AtlasModel& model, const TrainingBatch& batch,
                         std::span<const PointSet> clouds, double alpha_mc) {
  ad::Graph g(&model.parameters());
  AtlasGraph atlas(g, model);
  const auto latents = encode_frames(atlas, batch.frames, clouds);
  const auto nodes = build_batch_loss(atlas, batch, latents, clouds, {}, alpha_mc);
  return read_breakdown(g, nodes, alpha_mc);
}

LossAndGradient total_loss_with_gradient(const AtlasModel& model, const TrainingBatch& batch,
                                         std::span<const PointSet> clouds,
                                         std::span<const KdTree> indices, double alpha_mc) {
  ad::Graph g(&model.parameters());
  AtlasGraph atlas(g, model);
  const auto latents = encode_frames(atlas, batch.frames, clouds);
  const auto nodes = build_batch_loss(atlas, batch, latents, clouds, indices, alpha_mc);
  LossAndGradient out;
  out.loss = read_breakdown(g, nodes, alpha_mc);
  out.gradient = ad::nested_grad(g, nodes.total);
  return out;
}

}  // namespace mca
