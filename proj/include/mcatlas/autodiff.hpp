#pragma once

// Tape-based differentiation engine.
//
// A Graph is a flat list of nodes in topological order. Every node holds a
// dense 64-bit matrix primal. Three kinds of derivative are supported:
//
//  * grad(): reverse-mode gradient of a 1x1 node w.r.t. every parameter.
//  * jvp(): two-channel forward mode w.r.t. one input node. The tangent
//    values are appended to the tape as ordinary nodes, so a loss that
//    consumes them can be differentiated by grad() (forward-over-reverse).
//  * nested_grad(): grad() of such a Jacobian-consuming loss.
//
// Graphs are single-owner; no internal locking.

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace mca::ad {

using Matrix = Eigen::MatrixXd;
using NodeId = std::int32_t;

inline constexpr NodeId kNoNode = -1;

enum class Op : std::uint8_t {
  Const,
  Input,
  Param,
  Add,
  Sub,
  Mul,
  Div,
  Scale,
  Affine,
  MatMul,
  AddRow,
  BroadcastRows,
  Softplus,
  Sigmoid,
  Relu,
  Step,
  Tanh,
  Square,
  Sqrt,
  Sum,
  RowSum,
  ColMax,
  ColMaxSelect,
  SliceRows,
  ConcatRows,
  GatherRows,
};

const char* op_name(Op op);

// Named parameter arrays. Gradients are returned aligned with this list.
class ParameterSet {
 public:
  std::size_t add(std::string name, Matrix value);

  std::size_t size() const { return values_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  const Matrix& value(std::size_t i) const { return values_[i]; }
  Matrix& value(std::size_t i) { return values_[i]; }
  std::size_t find(const std::string& name) const;  // throws if absent
  std::size_t scalar_count() const;

  std::vector<Matrix> zeros_like() const;

 private:
  std::vector<std::string> names_;
  std::vector<Matrix> values_;
};

struct CompNode {
  NodeId id = kNoNode;
  Op op = Op::Const;
  std::vector<NodeId> parents;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  Matrix primal;
  bool evaluated = false;

  // Op attributes.
  double a = 0.0;  // Scale factor, Affine multiplier
  double b = 0.0;  // Affine offset
  Eigen::Index offset = 0;  // SliceRows
  std::vector<Eigen::Index> indices;  // GatherRows
  std::string name;  // Input
  std::size_t param = 0;  // Param
};

class Graph {
 public:
  explicit Graph(const ParameterSet* params = nullptr) : params_(params) {}

  // Leaves.
  NodeId constant(Matrix value);
  NodeId input(std::string name, Eigen::Index rows, Eigen::Index cols);
  NodeId param(std::size_t index);

  // Elementwise binary ops require equal shapes.
  NodeId add(NodeId x, NodeId y);
  NodeId sub(NodeId x, NodeId y);
  NodeId mul(NodeId x, NodeId y);
  NodeId div(NodeId x, NodeId y);
  NodeId scale(NodeId x, double factor);
  NodeId affine(NodeId x, double multiplier, double offset);

  NodeId matmul(NodeId x, NodeId y);
  // x (n x m) plus a 1 x m row added to every row.
  NodeId add_row(NodeId x, NodeId row);
  NodeId broadcast_rows(NodeId row, Eigen::Index rows);

  NodeId softplus(NodeId x);
  NodeId sigmoid(NodeId x);
  // ReLU with subgradient 0 at x == 0.
  NodeId relu(NodeId x);
  // Heaviside step (1 for x > 0, else 0); derivative is zero.
  NodeId step(NodeId x);
  NodeId tanh(NodeId x);
  NodeId square(NodeId x);
  NodeId sqrt(NodeId x);

  NodeId sum(NodeId x);
  NodeId row_sum(NodeId x);
  // Per-column maximum over rows (1 x m); ties pick the lowest row.
  NodeId col_max(NodeId x);
  // Picks values(r*, c) where r* is the argmax of key in column c.
  // Differentiable w.r.t. values only.
  NodeId col_max_select(NodeId key, NodeId values);

  NodeId slice_rows(NodeId x, Eigen::Index begin, Eigen::Index count);
  NodeId concat_rows(std::span<const NodeId> parts);
  NodeId gather_rows(NodeId x, std::vector<Eigen::Index> indices);

  // Binds a named input; the shape must match the declaration.
  void bind(const std::string& name, Matrix value);

  // Evaluates every node not yet evaluated. Throws std::invalid_argument on an
  // unbound input and NumericalError (naming the node) on NaN/Inf.
  void eval();
  void eval(const std::map<std::string, Matrix>& inputs);

  // Appends tangent nodes for the two seed directions of `input` and returns,
  // per output, the tangent node of each channel. A channel whose tangent is
  // identically zero gets a zero constant node.
  std::vector<std::array<NodeId, 2>> jvp(NodeId input,
                                         const std::array<Matrix, 2>& seeds,
                                         std::span<const NodeId> outputs);
  std::array<NodeId, 2> jvp(NodeId input, const std::array<Matrix, 2>& seeds,
                            NodeId output);

  // Adjoint of every node w.r.t. a 1x1 output. Unreachable nodes get an
  // empty (size 0) matrix, which reads as zero.
  std::vector<Matrix> adjoints(NodeId output) const;

  // dL/dθ for every entry of the bound ParameterSet (zeros where unused).
  std::vector<Matrix> grad(NodeId output) const;

  const Matrix& value(NodeId id) const;
  double scalar(NodeId id) const;
  const CompNode& node(NodeId id) const { return nodes_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return nodes_.size(); }
  const ParameterSet* parameters() const { return params_; }

 private:
  NodeId push(CompNode node);
  const CompNode& checked(NodeId id) const;
  void compute(CompNode& node);
  NodeId zeros(Eigen::Index rows, Eigen::Index cols);

  const ParameterSet* params_;
  std::vector<CompNode> nodes_;
  std::map<std::string, Matrix> bindings_;
  std::size_t evaluated_ = 0;
};

// grad() of a loss that consumes jvp() outputs. The tangent nodes are part of
// the tape, so this is the same reverse sweep; provided as a named entry point.
std::vector<Matrix> nested_grad(const Graph& graph, NodeId output);

// Scalar helpers shared by the graph kernels.
double softplus(double x);
double sigmoid(double x);

}  // namespace mca::ad
