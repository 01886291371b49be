#include "mcatlas/atlas_model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace mca {

void AtlasArchitecture::validate() const {
  if (latent_dim < 1) throw std::invalid_argument("latent_dim must be >= 1");
  if (patches < 1) throw std::invalid_argument("patch count must be >= 1");
  if (encoder_widths.empty()) throw std::invalid_argument("encoder needs at least one layer");
  for (int w : encoder_widths) {
    if (w < 1) throw std::invalid_argument("encoder widths must be >= 1");
  }
  for (int w : decoder_widths) {
    if (w < 1) throw std::invalid_argument("decoder widths must be >= 1");
  }
}

namespace {

std::vector<int> encoder_dims(const AtlasArchitecture& a) {
  std::vector<int> dims{3};
  dims.insert(dims.end(), a.encoder_widths.begin(), a.encoder_widths.end());
  dims.push_back(a.latent_dim);
  return dims;
}

std::vector<int> decoder_dims(const AtlasArchitecture& a) {
  std::vector<int> dims{2 + a.latent_dim};
  dims.insert(dims.end(), a.decoder_widths.begin(), a.decoder_widths.end());
  dims.push_back(3);
  return dims;
}

std::string encoder_name(std::size_t layer, const char* what) {
  return "encoder." + std::to_string(layer) + "." + what;
}

std::string decoder_name(int patch, std::size_t layer, const char* what) {
  return "decoder." + std::to_string(patch) + "." + std::to_string(layer) + "." + what;
}

}  // namespace

AtlasModel::AtlasModel(AtlasArchitecture arch, std::uint64_t seed) : arch_(std::move(arch)) {
  arch_.validate();
  Rng rng(seed);
  auto init = [&](int fan_in, int rows, int cols) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    ad::Matrix m(rows, cols);
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = dist(rng);
    }
    return m;
  };
  const auto enc = encoder_dims(arch_);
  for (std::size_t l = 0; l + 1 < enc.size(); ++l) {
    params_.add(encoder_name(l, "weight"), init(enc[l], enc[l], enc[l + 1]));
    params_.add(encoder_name(l, "bias"), init(enc[l], 1, enc[l + 1]));
  }
  const auto dec = decoder_dims(arch_);
  for (int k = 0; k < arch_.patches; ++k) {
    for (std::size_t l = 0; l + 1 < dec.size(); ++l) {
      params_.add(decoder_name(k, l, "weight"), init(dec[l], dec[l], dec[l + 1]));
      params_.add(decoder_name(k, l, "bias"), init(dec[l], 1, dec[l + 1]));
    }
  }
  lay_out();
}

AtlasModel::AtlasModel(AtlasArchitecture arch, ad::ParameterSet params)
    : arch_(std::move(arch)), params_(std::move(params)) {
  arch_.validate();
  lay_out();
}

void AtlasModel::lay_out() {
  auto expect = [&](const std::string& name, int rows, int cols) {
    std::size_t i = 0;
    try {
      i = params_.find(name);
    } catch (const std::out_of_range&) {
      throw std::invalid_argument("parameter '" + name + "' is missing");
    }
    const auto& m = params_.value(i);
    if (m.rows() != rows || m.cols() != cols) {
      throw std::invalid_argument("parameter '" + name + "' has shape " + std::to_string(m.rows()) +
                                  "x" + std::to_string(m.cols()) + ", expected " +
                                  std::to_string(rows) + "x" + std::to_string(cols));
    }
    return i;
  };
  encoder_.clear();
  decoders_.clear();
  const auto enc = encoder_dims(arch_);
  for (std::size_t l = 0; l + 1 < enc.size(); ++l) {
    encoder_.push_back(Layer{expect(encoder_name(l, "weight"), enc[l], enc[l + 1]),
                             expect(encoder_name(l, "bias"), 1, enc[l + 1])});
  }
  const auto dec = decoder_dims(arch_);
  for (int k = 0; k < arch_.patches; ++k) {
    std::vector<Layer> layers;
    for (std::size_t l = 0; l + 1 < dec.size(); ++l) {
      layers.push_back(Layer{expect(decoder_name(k, l, "weight"), dec[l], dec[l + 1]),
                             expect(decoder_name(k, l, "bias"), 1, dec[l + 1])});
    }
    decoders_.push_back(std::move(layers));
  }
  std::size_t expected = encoder_.size() * 2;
  for (const auto& d : decoders_) expected += d.size() * 2;
  if (expected != params_.size()) throw std::invalid_argument("unexpected extra parameter arrays");
}

const std::vector<AtlasModel::Layer>& AtlasModel::decoder_layers(int patch) const {
  if (patch < 0 || patch >= arch_.patches) {
    throw std::out_of_range("patch index " + std::to_string(patch) + " out of range [0, " +
                            std::to_string(arch_.patches) + ")");
  }
  return decoders_[static_cast<std::size_t>(patch)];
}

// ---------------------------------------------------------------------------

AtlasGraph::AtlasGraph(ad::Graph& graph, const AtlasModel& model)
    : graph_(graph), model_(model), param_nodes_(model.parameters().size(), ad::kNoNode) {
  if (graph.parameters() != &model.parameters()) {
    throw std::invalid_argument("graph must be bound to the model's parameter set");
  }
}

ad::NodeId AtlasGraph::param(std::size_t index) {
  if (param_nodes_[index] == ad::kNoNode) param_nodes_[index] = graph_.param(index);
  return param_nodes_[index];
}

ad::NodeId AtlasGraph::encode(const PointSet& cloud) {
  if (cloud.rows() == 0) throw std::invalid_argument("cannot encode an empty point cloud");
  const auto& layers = model_.encoder_layers();
  ad::NodeId h = graph_.constant(ad::Matrix(cloud));
  for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
    h = graph_.relu(graph_.add_row(graph_.matmul(h, param(layers[l].weight)), param(layers[l].bias)));
  }
  const ad::NodeId pooled = graph_.col_max(h);
  const auto& last = layers.back();
  return graph_.tanh(graph_.add(graph_.matmul(pooled, param(last.weight)), param(last.bias)));
}

AtlasGraph::Decoded AtlasGraph::decode(int patch, const Eigen::MatrixX2d& uv, ad::NodeId z,
                                       bool with_jacobian) {
  const auto& layers = model_.decoder_layers(patch);
  const auto& zn = graph_.node(z);
  if (zn.rows != 1 || zn.cols != model_.latent_dim()) {
    throw std::invalid_argument("latent code must be 1x" + std::to_string(model_.latent_dim()));
  }
  const Eigen::Index n = uv.rows();
  const ad::NodeId uv_node = graph_.constant(ad::Matrix(uv));

  // First layer on [uv | z]: the weight is split so z contributes one row
  // that is broadcast over all samples.
  const ad::NodeId w0 = param(layers[0].weight);
  const ad::NodeId w_uv = graph_.slice_rows(w0, 0, 2);
  const ad::NodeId w_z = graph_.slice_rows(w0, 2, model_.latent_dim());
  const ad::NodeId row = graph_.add(graph_.matmul(z, w_z), param(layers[0].bias));
  ad::NodeId h = graph_.add_row(graph_.matmul(uv_node, w_uv), row);
  for (std::size_t l = 1; l < layers.size(); ++l) {
    h = graph_.add_row(graph_.matmul(graph_.softplus(h), param(layers[l].weight)),
                       param(layers[l].bias));
  }
  Decoded out;
  out.points = h;
  if (with_jacobian) {
    ad::Matrix eu = ad::Matrix::Zero(n, 2);
    ad::Matrix ev = ad::Matrix::Zero(n, 2);
    eu.col(0).setOnes();
    ev.col(1).setOnes();
    const auto t = graph_.jvp(uv_node, {eu, ev}, h);
    out.du = t[0];
    out.dv = t[1];
  }
  return out;
}

// ---------------------------------------------------------------------------

Latent encode(const AtlasModel& model, const PointSet& cloud) {
  ad::Graph g(&model.parameters());
  AtlasGraph ag(g, model);
  const ad::NodeId z = ag.encode(cloud);
  g.eval();
  return g.value(z);
}

namespace {

void check_sample(const AtlasModel& model, const UvSample& s) {
  if (s.patch < 0 || s.patch >= model.patches()) {
    throw std::out_of_range("patch index " + std::to_string(s.patch) + " out of range");
  }
  if (!(s.uv.x() >= 0.0 && s.uv.x() <= 1.0 && s.uv.y() >= 0.0 && s.uv.y() <= 1.0)) {
    throw std::invalid_argument("uv sample outside [0,1]^2");
  }
}

// Decodes samples grouped by patch and scatters the rows back into input order.
template <typename Emit>
void decode_grouped(const AtlasModel& model, const Latent& z, std::span<const UvSample> samples,
                    bool with_jacobian, Emit&& emit) {
  if (z.size() != model.latent_dim()) {
    throw std::invalid_argument("latent code has length " + std::to_string(z.size()) +
                                ", expected " + std::to_string(model.latent_dim()));
  }
  std::vector<std::vector<std::size_t>> groups(static_cast<std::size_t>(model.patches()));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    check_sample(model, samples[i]);
    groups[static_cast<std::size_t>(samples[i].patch)].push_back(i);
  }
  ad::Graph g(&model.parameters());
  AtlasGraph ag(g, model);
  const ad::NodeId zn = g.constant(z);
  std::vector<std::pair<int, AtlasGraph::Decoded>> decoded;
  for (int k = 0; k < model.patches(); ++k) {
    const auto& idx = groups[static_cast<std::size_t>(k)];
    if (idx.empty()) continue;
    Eigen::MatrixX2d uv(static_cast<Eigen::Index>(idx.size()), 2);
    for (std::size_t r = 0; r < idx.size(); ++r) uv.row(static_cast<Eigen::Index>(r)) = samples[idx[r]].uv.transpose();
    decoded.emplace_back(k, ag.decode(k, uv, zn, with_jacobian));
  }
  g.eval();
  for (const auto& [k, d] : decoded) {
    const auto& idx = groups[static_cast<std::size_t>(k)];
    const ad::Matrix& pts = g.value(d.points);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const auto row = static_cast<Eigen::Index>(r);
      Mat32 jac = Mat32::Zero();
      if (with_jacobian) {
        jac.col(0) = g.value(d.du).row(row).transpose();
        jac.col(1) = g.value(d.dv).row(row).transpose();
      }
      emit(idx[r], Vec3(pts.row(row).transpose()), jac);
    }
  }
}

}  // namespace

PointSet decode(const AtlasModel& model, const Latent& z, std::span<const UvSample> samples) {
  PointSet out(static_cast<Eigen::Index>(samples.size()), 3);
  decode_grouped(model, z, samples, false, [&](std::size_t i, const Vec3& p, const Mat32&) {
    out.row(static_cast<Eigen::Index>(i)) = p.transpose();
  });
  return out;
}

Vec3 decode(const AtlasModel& model, const Latent& z, const UvSample& sample) {
  return decode(model, z, std::span<const UvSample>(&sample, 1)).row(0).transpose();
}

std::vector<SurfaceSample> decode_with_jacobian(const AtlasModel& model, const Latent& z,
                                                std::span<const UvSample> samples) {
  std::vector<SurfaceSample> out(samples.size());
  decode_grouped(model, z, samples, true, [&](std::size_t i, const Vec3& p, const Mat32& jac) {
    out[i].uv = samples[i];
    out[i].point = p;
    out[i].jacobian = jac;
    out[i].metric = metric_tensor(jac);
  });
  return out;
}

SurfaceSample decode_with_jacobian(const AtlasModel& model, const Latent& z, const UvSample& sample) {
  return decode_with_jacobian(model, z, std::span<const UvSample>(&sample, 1)).front();
}

Mat2 metric_tensor(const Mat32& j) {
  const double e = j.col(0).dot(j.col(0));
  const double f = j.col(0).dot(j.col(1));
  const double g = j.col(1).dot(j.col(1));
  Mat2 m;
  m << e, f, f, g;
  return m;
}

}  // namespace mca
