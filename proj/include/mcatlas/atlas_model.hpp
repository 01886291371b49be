#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mcatlas/autodiff.hpp"
#include "mcatlas/types.hpp"

namespace mca {

using Latent = Eigen::RowVectorXd;

// Network shape. The encoder is a per-point MLP (ReLU) over xyz, a global
// max-pool, then a tanh projection to `latent_dim`. Each patch owns an
// independent decoder MLP (2 + latent_dim) -> hidden... -> 3 with Softplus
// hidden activations and a linear output.
struct AtlasArchitecture {
  int latent_dim = 1024;
  int patches = 10;
  std::vector<int> encoder_widths{64, 128, 1024};
  std::vector<int> decoder_widths{512, 512, 256};

  void validate() const;
  friend bool operator==(const AtlasArchitecture&, const AtlasArchitecture&) = default;
};

class AtlasModel {
 public:
  struct Layer {
    std::size_t weight = 0;  // fan_in x fan_out
    std::size_t bias = 0;    // 1 x fan_out
  };

  // Weights and biases uniform in +-1/sqrt(fan_in).
  AtlasModel(AtlasArchitecture arch, std::uint64_t seed);
  // Adopts existing parameters; names and shapes must match the architecture.
  AtlasModel(AtlasArchitecture arch, ad::ParameterSet params);

  const AtlasArchitecture& architecture() const { return arch_; }
  int patches() const { return arch_.patches; }
  int latent_dim() const { return arch_.latent_dim; }

  const ad::ParameterSet& parameters() const { return params_; }
  ad::ParameterSet& parameters() { return params_; }

  // Per-point layers followed by the latent projection.
  const std::vector<Layer>& encoder_layers() const { return encoder_; }
  const std::vector<Layer>& decoder_layers(int patch) const;

 private:
  void lay_out();

  AtlasArchitecture arch_;
  ad::ParameterSet params_;
  std::vector<Layer> encoder_;
  std::vector<std::vector<Layer>> decoders_;
};

// Builds encoder/decoder subgraphs on a caller-owned graph. Parameter nodes
// are created once per graph, so gradients of every use accumulate.
class AtlasGraph {
 public:
  struct Decoded {
    ad::NodeId points = ad::kNoNode;  // n x 3
    ad::NodeId du = ad::kNoNode;      // n x 3, d(points)/du, when requested
    ad::NodeId dv = ad::kNoNode;      // n x 3, d(points)/dv
  };

  AtlasGraph(ad::Graph& graph, const AtlasModel& model);

  // 1 x latent_dim code of an n x 3 cloud.
  ad::NodeId encode(const PointSet& cloud);
  // Decodes an n x 2 block of UV coordinates belonging to one patch.
  Decoded decode(int patch, const Eigen::MatrixX2d& uv, ad::NodeId z, bool with_jacobian);

  ad::Graph& graph() { return graph_; }
  const AtlasModel& model() const { return model_; }

 private:
  ad::NodeId param(std::size_t index);

  ad::Graph& graph_;
  const AtlasModel& model_;
  std::vector<ad::NodeId> param_nodes_;
};

Latent encode(const AtlasModel& model, const PointSet& cloud);

Vec3 decode(const AtlasModel& model, const Latent& z, const UvSample& sample);
PointSet decode(const AtlasModel& model, const Latent& z, std::span<const UvSample> samples);

SurfaceSample decode_with_jacobian(const AtlasModel& model, const Latent& z, const UvSample& sample);
std::vector<SurfaceSample> decode_with_jacobian(const AtlasModel& model, const Latent& z,
                                                std::span<const UvSample> samples);

// First fundamental form J^T J.
Mat2 metric_tensor(const Mat32& jacobian);

}  // namespace mca
