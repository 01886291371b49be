#include "mcatlas/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <utility>

#include "mcatlas/errors.hpp"

namespace mca::ad {

namespace {

std::string shape_str(Eigen::Index r, Eigen::Index c) {
  std::ostringstream os;
  os << r << "x" << c;
  return os.str();
}

Eigen::Index argmax_in_col(const Matrix& key, Eigen::Index col) {
  Eigen::Index best = 0;
  double best_value = key(0, col);
  for (Eigen::Index r = 1; r < key.rows(); ++r) {
    if (key(r, col) > best_value) {
      best_value = key(r, col);
      best = r;
    }
  }
  return best;
}

void accumulate(Matrix& target, const Matrix& contribution) {
  if (target.size() == 0) {
    target = contribution;
  } else {
    target += contribution;
  }
}

}  // namespace

double softplus(double x) {
  // log(1 + e^x) == x + log(1 + e^-x); the second form is used for large x.
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

const char* op_name(Op op) {
  switch (op) {
    case Op::Const: return "const";
    case Op::Input: return "input";
    case Op::Param: return "param";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Div: return "div";
    case Op::Scale: return "scale";
    case Op::Affine: return "affine";
    case Op::MatMul: return "matmul";
    case Op::AddRow: return "add_row";
    case Op::BroadcastRows: return "broadcast_rows";
    case Op::Softplus: return "softplus";
    case Op::Sigmoid: return "sigmoid";
    case Op::Relu: return "relu";
    case Op::Step: return "step";
    case Op::Tanh: return "tanh";
    case Op::Square: return "square";
    case Op::Sqrt: return "sqrt";
    case Op::Sum: return "sum";
    case Op::RowSum: return "row_sum";
    case Op::ColMax: return "col_max";
    case Op::ColMaxSelect: return "col_max_select";
    case Op::SliceRows: return "slice_rows";
    case Op::ConcatRows: return "concat_rows";
    case Op::GatherRows: return "gather_rows";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// ParameterSet

std::size_t ParameterSet::add(std::string name, Matrix value) {
  if (!value.allFinite()) {
    throw std::invalid_argument("parameter '" + name + "' is not finite");
  }
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
  return values_.size() - 1;
}

std::size_t ParameterSet::find(const std::string& name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw std::out_of_range("no parameter named '" + name + "'");
  return static_cast<std::size_t>(it - names_.begin());
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += static_cast<std::size_t>(v.size());
  return n;
}

std::vector<Matrix> ParameterSet::zeros_like() const {
  std::vector<Matrix> out;
  out.reserve(values_.size());
  for (const auto& v : values_) out.push_back(Matrix::Zero(v.rows(), v.cols()));
  return out;
}

// ---------------------------------------------------------------------------
// Graph construction

NodeId Graph::push(CompNode node) {
  node.id = static_cast<NodeId>(nodes_.size());
  for (NodeId p : node.parents) {
    if (p < 0 || p >= node.id) {
      throw std::invalid_argument("parent id out of topological order");
    }
  }
  nodes_.push_back(std::move(node));
  return nodes_.back().id;
}

const CompNode& Graph::checked(NodeId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
    throw std::out_of_range("node id " + std::to_string(id) + " out of range");
  }
  return nodes_[static_cast<std::size_t>(id)];
}

NodeId Graph::constant(Matrix value) {
  CompNode n;
  n.op = Op::Const;
  n.rows = value.rows();
  n.cols = value.cols();
  n.primal = std::move(value);
  return push(std::move(n));
}

NodeId Graph::zeros(Eigen::Index rows, Eigen::Index cols) {
  return constant(Matrix::Zero(rows, cols));
}

NodeId Graph::input(std::string name, Eigen::Index rows, Eigen::Index cols) {
  for (const auto& n : nodes_) {
    if (n.op == Op::Input && n.name == name) {
      throw std::invalid_argument("duplicate input name '" + name + "'");
    }
  }
  CompNode n;
  n.op = Op::Input;
  n.rows = rows;
  n.cols = cols;
  n.name = std::move(name);
  return push(std::move(n));
}

NodeId Graph::param(std::size_t index) {
  if (params_ == nullptr || index >= params_->size()) {
    throw std::out_of_range("parameter index out of range");
  }
  CompNode n;
  n.op = Op::Param;
  n.param = index;
  n.rows = params_->value(index).rows();
  n.cols = params_->value(index).cols();
  return push(std::move(n));
}

namespace {

CompNode make_node(Op op, std::vector<NodeId> parents, Eigen::Index rows, Eigen::Index cols) {
  CompNode n;
  n.op = op;
  n.parents = std::move(parents);
  n.rows = rows;
  n.cols = cols;
  return n;
}

}  // namespace

#define MCA_SAME_SHAPE(x, y, what)                                                    \
  do {                                                                                \
    const auto& nx = checked(x);                                                      \
    const auto& ny = checked(y);                                                      \
    if (nx.rows != ny.rows || nx.cols != ny.cols) {                                   \
      throw std::invalid_argument(std::string(what) + ": shape mismatch " +          \
                                  shape_str(nx.rows, nx.cols) + " vs " +              \
                                  shape_str(ny.rows, ny.cols));                       \
    }                                                                                 \
  } while (0)

NodeId Graph::add(NodeId x, NodeId y) {
  MCA_SAME_SHAPE(x, y, "add");
  return push(make_node(Op::Add, {x, y}, checked(x).rows, checked(x).cols));
}

NodeId Graph::sub(NodeId x, NodeId y) {
  MCA_SAME_SHAPE(x, y, "sub");
  return push(make_node(Op::Sub, {x, y}, checked(x).rows, checked(x).cols));
}

NodeId Graph::mul(NodeId x, NodeId y) {
  MCA_SAME_SHAPE(x, y, "mul");
  return push(make_node(Op::Mul, {x, y}, checked(x).rows, checked(x).cols));
}

NodeId Graph::div(NodeId x, NodeId y) {
  MCA_SAME_SHAPE(x, y, "div");
  return push(make_node(Op::Div, {x, y}, checked(x).rows, checked(x).cols));
}

#undef MCA_SAME_SHAPE

NodeId Graph::scale(NodeId x, double factor) {
  auto n = make_node(Op::Scale, {x}, checked(x).rows, checked(x).cols);
  n.a = factor;
  return push(std::move(n));
}

NodeId Graph::affine(NodeId x, double multiplier, double offset) {
  auto n = make_node(Op::Affine, {x}, checked(x).rows, checked(x).cols);
  n.a = multiplier;
  n.b = offset;
  return push(std::move(n));
}

NodeId Graph::matmul(NodeId x, NodeId y) {
  const auto& nx = checked(x);
  const auto& ny = checked(y);
  if (nx.cols != ny.rows) {
    throw std::invalid_argument("matmul: inner dimensions differ " + shape_str(nx.rows, nx.cols) +
                                " * " + shape_str(ny.rows, ny.cols));
  }
  return push(make_node(Op::MatMul, {x, y}, nx.rows, ny.cols));
}

NodeId Graph::add_row(NodeId x, NodeId row) {
  const auto& nx = checked(x);
  const auto& nr = checked(row);
  if (nr.rows != 1 || nr.cols != nx.cols) {
    throw std::invalid_argument("add_row: row must be 1x" + std::to_string(nx.cols));
  }
  return push(make_node(Op::AddRow, {x, row}, nx.rows, nx.cols));
}

NodeId Graph::broadcast_rows(NodeId row, Eigen::Index rows) {
  const auto& nr = checked(row);
  if (nr.rows != 1) throw std::invalid_argument("broadcast_rows: expects a single row");
  return push(make_node(Op::BroadcastRows, {row}, rows, nr.cols));
}

NodeId Graph::softplus(NodeId x) {
  return push(make_node(Op::Softplus, {x}, checked(x).rows, checked(x).cols));
}
NodeId Graph::sigmoid(NodeId x) {
  return push(make_node(Op::Sigmoid, {x}, checked(x).rows, checked(x).cols));
}
NodeId Graph::relu(NodeId x) {
  return push(make_node(Op::Relu, {x}, checked(x).rows, checked(x).cols));
}
NodeId Graph::step(NodeId x) {
  return push(make_node(Op::Step, {x}, checked(x).rows, checked(x).cols));
}
NodeId Graph::tanh(NodeId x) {
  return push(make_node(Op::Tanh, {x}, checked(x).rows, checked(x).cols));
}
NodeId Graph::square(NodeId x) {
  return push(make_node(Op::Square, {x}, checked(x).rows, checked(x).cols));
}
NodeId Graph::sqrt(NodeId x) {
  return push(make_node(Op::Sqrt, {x}, checked(x).rows, checked(x).cols));
}

NodeId Graph::sum(NodeId x) { return push(make_node(Op::Sum, {x}, 1, 1)); }

NodeId Graph::row_sum(NodeId x) {
  return push(make_node(Op::RowSum, {x}, checked(x).rows, 1));
}

NodeId Graph::col_max(NodeId x) {
  if (checked(x).rows == 0) throw std::invalid_argument("col_max over zero rows");
  return push(make_node(Op::ColMax, {x}, 1, checked(x).cols));
}

NodeId Graph::col_max_select(NodeId key, NodeId values) {
  const auto& nk = checked(key);
  const auto& nv = checked(values);
  if (nk.rows != nv.rows || nk.cols != nv.cols || nk.rows == 0) {
    throw std::invalid_argument("col_max_select: key/value shape mismatch");
  }
  return push(make_node(Op::ColMaxSelect, {key, values}, 1, nk.cols));
}

NodeId Graph::slice_rows(NodeId x, Eigen::Index begin, Eigen::Index count) {
  const auto& nx = checked(x);
  if (begin < 0 || count < 0 || begin + count > nx.rows) {
    throw std::invalid_argument("slice_rows out of range");
  }
  auto n = make_node(Op::SliceRows, {x}, count, nx.cols);
  n.offset = begin;
  return push(std::move(n));
}

NodeId Graph::concat_rows(std::span<const NodeId> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows of nothing");
  const Eigen::Index cols = checked(parts.front()).cols;
  Eigen::Index rows = 0;
  for (NodeId p : parts) {
    if (checked(p).cols != cols) throw std::invalid_argument("concat_rows: column mismatch");
    rows += checked(p).rows;
  }
  return push(make_node(Op::ConcatRows, {parts.begin(), parts.end()}, rows, cols));
}

NodeId Graph::gather_rows(NodeId x, std::vector<Eigen::Index> indices) {
  const auto& nx = checked(x);
  for (auto i : indices) {
    if (i < 0 || i >= nx.rows) throw std::invalid_argument("gather_rows index out of range");
  }
  auto n = make_node(Op::GatherRows, {x}, static_cast<Eigen::Index>(indices.size()), nx.cols);
  n.indices = std::move(indices);
  return push(std::move(n));
}

// ---------------------------------------------------------------------------
// Evaluation

void Graph::bind(const std::string& name, Matrix value) {
  for (const auto& n : nodes_) {
    if (n.op == Op::Input && n.name == name) {
      if (n.rows != value.rows() || n.cols != value.cols()) {
        throw std::invalid_argument("input '" + name + "' bound with shape " +
                                    shape_str(value.rows(), value.cols()) + ", declared " +
                                    shape_str(n.rows, n.cols));
      }
      bindings_[name] = std::move(value);
      return;
    }
  }
  throw std::invalid_argument("no input named '" + name + "'");
}

void Graph::eval(const std::map<std::string, Matrix>& inputs) {
  for (const auto& [name, value] : inputs) bind(name, value);
  eval();
}

void Graph::eval() {
  for (; evaluated_ < nodes_.size(); ++evaluated_) {
    CompNode& n = nodes_[evaluated_];
    compute(n);
    n.evaluated = true;
    if (!n.primal.allFinite()) {
      throw NumericalError("non-finite value produced at node " + std::to_string(n.id) + " (" +
                           op_name(n.op) + ")");
    }
  }
}

void Graph::compute(CompNode& n) {
  auto v = [this](NodeId id) -> const Matrix& { return nodes_[static_cast<std::size_t>(id)].primal; };
  const auto& p = n.parents;
  switch (n.op) {
    case Op::Const:
      break;
    case Op::Input: {
      auto it = bindings_.find(n.name);
      if (it == bindings_.end()) throw std::invalid_argument("unbound input '" + n.name + "'");
      n.primal = it->second;
      break;
    }
    case Op::Param:
      n.primal = params_->value(n.param);
      break;
    case Op::Add: n.primal = v(p[0]) + v(p[1]); break;
    case Op::Sub: n.primal = v(p[0]) - v(p[1]); break;
    case Op::Mul: n.primal = v(p[0]).cwiseProduct(v(p[1])); break;
    case Op::Div: n.primal = v(p[0]).cwiseQuotient(v(p[1])); break;
    case Op::Scale: n.primal = n.a * v(p[0]); break;
    case Op::Affine: n.primal = (n.a * v(p[0])).array() + n.b; break;
    case Op::MatMul:
      n.primal.resize(n.rows, n.cols);
      n.primal.noalias() = v(p[0]) * v(p[1]);
      break;
    case Op::AddRow:
      n.primal = v(p[0]);
      n.primal.rowwise() += v(p[1]).row(0);
      break;
    case Op::BroadcastRows:
      n.primal = v(p[0]).row(0).replicate(n.rows, 1);
      break;
    case Op::Softplus: n.primal = v(p[0]).unaryExpr([](double x) { return mca::ad::softplus(x); }); break;
    case Op::Sigmoid: n.primal = v(p[0]).unaryExpr([](double x) { return mca::ad::sigmoid(x); }); break;
    case Op::Relu: n.primal = v(p[0]).cwiseMax(0.0); break;
    case Op::Step:
      n.primal = v(p[0]).unaryExpr([](double x) { return x > 0.0 ? 1.0 : 0.0; });
      break;
    case Op::Tanh: n.primal = v(p[0]).array().tanh(); break;
    case Op::Square: n.primal = v(p[0]).array().square(); break;
    case Op::Sqrt: n.primal = v(p[0]).array().sqrt(); break;
    case Op::Sum: n.primal = Matrix::Constant(1, 1, v(p[0]).sum()); break;
    case Op::RowSum: n.primal = v(p[0]).rowwise().sum(); break;
    case Op::ColMax: {
      const Matrix& x = v(p[0]);
      n.primal.resize(1, x.cols());
      for (Eigen::Index c = 0; c < x.cols(); ++c) n.primal(0, c) = x(argmax_in_col(x, c), c);
      break;
    }
    case Op::ColMaxSelect: {
      const Matrix& key = v(p[0]);
      const Matrix& vals = v(p[1]);
      n.primal.resize(1, key.cols());
      for (Eigen::Index c = 0; c < key.cols(); ++c) n.primal(0, c) = vals(argmax_in_col(key, c), c);
      break;
    }
    case Op::SliceRows: n.primal = v(p[0]).middleRows(n.offset, n.rows); break;
    case Op::ConcatRows: {
      n.primal.resize(n.rows, n.cols);
      Eigen::Index r = 0;
      for (NodeId q : p) {
        const Matrix& part = v(q);
        n.primal.middleRows(r, part.rows()) = part;
        r += part.rows();
      }
      break;
    }
    case Op::GatherRows: {
      const Matrix& x = v(p[0]);
      n.primal.resize(n.rows, n.cols);
      for (Eigen::Index i = 0; i < n.rows; ++i) {
        n.primal.row(i) = x.row(n.indices[static_cast<std::size_t>(i)]);
      }
      break;
    }
  }
}

const Matrix& Graph::value(NodeId id) const {
  const auto& n = checked(id);
  if (!n.evaluated) throw std::logic_error("node " + std::to_string(id) + " not evaluated");
  return n.primal;
}

double Graph::scalar(NodeId id) const {
  const Matrix& m = value(id);
  if (m.rows() != 1 || m.cols() != 1) throw std::invalid_argument("node is not scalar");
  return m(0, 0);
}

// ---------------------------------------------------------------------------
// Forward mode (tangent nodes recorded on the tape)

std::array<NodeId, 2> Graph::jvp(NodeId input, const std::array<Matrix, 2>& seeds, NodeId output) {
  const NodeId outs[] = {output};
  return jvp(input, seeds, outs).front();
}

std::vector<std::array<NodeId, 2>> Graph::jvp(NodeId input, const std::array<Matrix, 2>& seeds,
                                              std::span<const NodeId> outputs) {
  const auto& in = checked(input);
  for (const auto& s : seeds) {
    if (s.rows() != in.rows || s.cols() != in.cols) {
      throw std::invalid_argument("jvp seed dimension mismatch: seed " +
                                  shape_str(s.rows(), s.cols()) + ", input " +
                                  shape_str(in.rows, in.cols));
    }
  }
  NodeId last = input;
  for (NodeId o : outputs) last = std::max(last, checked(o).id);

  const auto count = static_cast<std::size_t>(last) + 1;
  std::vector<std::array<NodeId, 2>> tangent(count, {kNoNode, kNoNode});
  tangent[static_cast<std::size_t>(input)] = {constant(seeds[0]), constant(seeds[1])};

  for (NodeId id = input + 1; id <= last; ++id) {
    // Copy what is needed: pushing new nodes may reallocate nodes_.
    const CompNode src = [&] {
      const CompNode& n = nodes_[static_cast<std::size_t>(id)];
      CompNode c;
      c.id = n.id;
      c.op = n.op;
      c.parents = n.parents;
      c.rows = n.rows;
      c.cols = n.cols;
      c.a = n.a;
      c.b = n.b;
      c.offset = n.offset;
      c.indices = n.indices;
      return c;
    }();
    const auto& p = src.parents;
    auto t = [&](std::size_t parent, int ch) {
      return tangent[static_cast<std::size_t>(p[parent])][static_cast<std::size_t>(ch)];
    };
    bool any = false;
    for (NodeId q : p) {
      const auto& tq = tangent[static_cast<std::size_t>(q)];
      any = any || tq[0] != kNoNode || tq[1] != kNoNode;
    }
    if (!any) continue;

    // Derivative factor shared by both channels for unary elementwise ops.
    NodeId factor = kNoNode;
    auto unary = [&](auto make_factor) {
      for (int ch = 0; ch < 2; ++ch) {
        const NodeId tx = t(0, ch);
        if (tx == kNoNode) continue;
        if (factor == kNoNode) factor = make_factor();
        tangent[static_cast<std::size_t>(id)][static_cast<std::size_t>(ch)] = mul(factor, tx);
      }
    };

    switch (src.op) {
      case Op::Const:
      case Op::Input:
      case Op::Param:
      case Op::Step:
        break;
      case Op::Softplus:
        unary([&] { return sigmoid(p[0]); });
        break;
      case Op::Sigmoid:
        unary([&] { return mul(id, affine(id, -1.0, 1.0)); });
        break;
      case Op::Relu:
        unary([&] { return step(p[0]); });
        break;
      case Op::Tanh:
        unary([&] { return affine(square(id), -1.0, 1.0); });
        break;
      case Op::Square:
        unary([&] { return scale(p[0], 2.0); });
        break;
      default:
        for (int ch = 0; ch < 2; ++ch) {
          NodeId out = kNoNode;
          switch (src.op) {
            case Op::Add: {
              const NodeId tx = t(0, ch), ty = t(1, ch);
              if (tx != kNoNode && ty != kNoNode) out = add(tx, ty);
              else out = tx != kNoNode ? tx : ty;
              break;
            }
            case Op::Sub: {
              const NodeId tx = t(0, ch), ty = t(1, ch);
              if (tx != kNoNode && ty != kNoNode) out = sub(tx, ty);
              else if (tx != kNoNode) out = tx;
              else if (ty != kNoNode) out = scale(ty, -1.0);
              break;
            }
            case Op::Mul: {
              const NodeId tx = t(0, ch), ty = t(1, ch);
              NodeId a = tx != kNoNode ? mul(tx, p[1]) : kNoNode;
              NodeId b = ty != kNoNode ? mul(p[0], ty) : kNoNode;
              if (a != kNoNode && b != kNoNode) out = add(a, b);
              else out = a != kNoNode ? a : b;
              break;
            }
            case Op::Div: {
              const NodeId tx = t(0, ch), ty = t(1, ch);
              NodeId a = tx != kNoNode ? div(tx, p[1]) : kNoNode;
              NodeId b = ty != kNoNode ? mul(div(id, p[1]), ty) : kNoNode;
              if (a != kNoNode && b != kNoNode) out = sub(a, b);
              else if (a != kNoNode) out = a;
              else if (b != kNoNode) out = scale(b, -1.0);
              break;
            }
            case Op::Scale:
            case Op::Affine:
              if (t(0, ch) != kNoNode) out = scale(t(0, ch), src.a);
              break;
            case Op::MatMul: {
              const NodeId tx = t(0, ch), ty = t(1, ch);
              NodeId a = tx != kNoNode ? matmul(tx, p[1]) : kNoNode;
              NodeId b = ty != kNoNode ? matmul(p[0], ty) : kNoNode;
              if (a != kNoNode && b != kNoNode) out = add(a, b);
              else out = a != kNoNode ? a : b;
              break;
            }
            case Op::AddRow: {
              const NodeId tx = t(0, ch), tr = t(1, ch);
              if (tx != kNoNode && tr != kNoNode) out = add_row(tx, tr);
              else if (tx != kNoNode) out = tx;
              else if (tr != kNoNode) out = broadcast_rows(tr, src.rows);
              break;
            }
            case Op::BroadcastRows:
              if (t(0, ch) != kNoNode) out = broadcast_rows(t(0, ch), src.rows);
              break;
            case Op::Sqrt:
              if (t(0, ch) != kNoNode) out = div(t(0, ch), scale(id, 2.0));
              break;
            case Op::Sum:
              if (t(0, ch) != kNoNode) out = sum(t(0, ch));
              break;
            case Op::RowSum:
              if (t(0, ch) != kNoNode) out = row_sum(t(0, ch));
              break;
            case Op::ColMax:
              if (t(0, ch) != kNoNode) out = col_max_select(p[0], t(0, ch));
              break;
            case Op::ColMaxSelect:
              if (t(1, ch) != kNoNode) out = col_max_select(p[0], t(1, ch));
              break;
            case Op::SliceRows:
              if (t(0, ch) != kNoNode) out = slice_rows(t(0, ch), src.offset, src.rows);
              break;
            case Op::GatherRows:
              if (t(0, ch) != kNoNode) out = gather_rows(t(0, ch), src.indices);
              break;
            case Op::ConcatRows: {
              bool has = false;
              for (std::size_t k = 0; k < p.size(); ++k) has = has || t(k, ch) != kNoNode;
              if (!has) break;
              std::vector<NodeId> parts;
              for (std::size_t k = 0; k < p.size(); ++k) {
                const NodeId tk = t(k, ch);
                const auto& pk = nodes_[static_cast<std::size_t>(p[k])];
                parts.push_back(tk != kNoNode ? tk : zeros(pk.rows, pk.cols));
              }
              out = concat_rows(parts);
              break;
            }
            default:
              break;
          }
          tangent[static_cast<std::size_t>(id)][static_cast<std::size_t>(ch)] = out;
        }
    }
  }

  std::vector<std::array<NodeId, 2>> result;
  result.reserve(outputs.size());
  for (NodeId o : outputs) {
    std::array<NodeId, 2> r = tangent[static_cast<std::size_t>(o)];
    for (auto& ch : r) {
      if (ch == kNoNode) ch = zeros(checked(o).rows, checked(o).cols);
    }
    result.push_back(r);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Reverse mode

namespace {

// Marks nodes that can influence `output` and, when `params_only`, that
// themselves depend on a parameter.
std::vector<char> relevant_nodes(const std::vector<CompNode>& nodes, NodeId output, bool params_only) {
  const auto n = static_cast<std::size_t>(output) + 1;
  std::vector<char> reach(n, 0);
  reach[n - 1] = 1;
  for (std::size_t i = n; i-- > 0;) {
    if (!reach[i]) continue;
    for (NodeId q : nodes[i].parents) reach[static_cast<std::size_t>(q)] = 1;
  }
  if (!params_only) return reach;
  std::vector<char> depends(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (nodes[i].op == Op::Param) {
      depends[i] = 1;
      continue;
    }
    if (nodes[i].op == Op::Step) continue;
    for (NodeId q : nodes[i].parents) {
      // ColMaxSelect's key input carries no derivative.
      if (nodes[i].op == Op::ColMaxSelect && q == nodes[i].parents[0]) continue;
      if (depends[static_cast<std::size_t>(q)]) depends[i] = 1;
    }
  }
  for (std::size_t i = 0; i < n; ++i) reach[i] = static_cast<char>(reach[i] && depends[i]);
  return reach;
}

std::vector<Matrix> backward(const std::vector<CompNode>& nodes, NodeId output, bool params_only) {
  const auto& out = nodes.at(static_cast<std::size_t>(output));
  if (out.rows != 1 || out.cols != 1) {
    throw std::invalid_argument("gradient requires a scalar (1x1) output, got node " +
                                std::to_string(output) + " of shape " +
                                shape_str(out.rows, out.cols));
  }
  if (!out.evaluated) throw std::logic_error("gradient requested before eval()");

  const std::vector<char> live = relevant_nodes(nodes, output, params_only);
  std::vector<Matrix> adj(nodes.size());
  if (!live[static_cast<std::size_t>(output)]) return adj;
  adj[static_cast<std::size_t>(output)] = Matrix::Ones(1, 1);

  auto val = [&](NodeId id) -> const Matrix& { return nodes[static_cast<std::size_t>(id)].primal; };
  auto want = [&](NodeId id) { return live[static_cast<std::size_t>(id)] != 0; };
  auto acc = [&](NodeId id, const Matrix& m) { accumulate(adj[static_cast<std::size_t>(id)], m); };

  for (std::size_t i = static_cast<std::size_t>(output) + 1; i-- > 0;) {
    if (adj[i].size() == 0) continue;
    const CompNode& n = nodes[i];
    const Matrix& g = adj[i];
    const auto& p = n.parents;
    switch (n.op) {
      case Op::Const:
      case Op::Input:
      case Op::Param:
      case Op::Step:
        break;
      case Op::Add:
        if (want(p[0])) acc(p[0], g);
        if (want(p[1])) acc(p[1], g);
        break;
      case Op::Sub:
        if (want(p[0])) acc(p[0], g);
        if (want(p[1])) acc(p[1], -g);
        break;
      case Op::Mul:
        if (want(p[0])) acc(p[0], g.cwiseProduct(val(p[1])));
        if (want(p[1])) acc(p[1], g.cwiseProduct(val(p[0])));
        break;
      case Op::Div: {
        const Matrix& y = val(p[1]);
        if (want(p[0])) acc(p[0], g.cwiseQuotient(y));
        if (want(p[1])) acc(p[1], -g.cwiseProduct(n.primal).cwiseQuotient(y));
        break;
      }
      case Op::Scale:
      case Op::Affine:
        if (want(p[0])) acc(p[0], n.a * g);
        break;
      case Op::MatMul:
        if (want(p[0])) {
          Matrix gx(val(p[0]).rows(), val(p[0]).cols());
          gx.noalias() = g * val(p[1]).transpose();
          acc(p[0], gx);
        }
        if (want(p[1])) {
          Matrix gy(val(p[1]).rows(), val(p[1]).cols());
          gy.noalias() = val(p[0]).transpose() * g;
          acc(p[1], gy);
        }
        break;
      case Op::AddRow:
        if (want(p[0])) acc(p[0], g);
        if (want(p[1])) acc(p[1], g.colwise().sum());
        break;
      case Op::BroadcastRows:
        if (want(p[0])) acc(p[0], g.colwise().sum());
        break;
      case Op::Softplus:
        if (want(p[0])) acc(p[0], g.cwiseProduct(val(p[0]).unaryExpr([](double x) { return mca::ad::sigmoid(x); })));
        break;
      case Op::Sigmoid:
        if (want(p[0])) {
          acc(p[0], g.cwiseProduct(n.primal.unaryExpr([](double s) { return s * (1.0 - s); })));
        }
        break;
      case Op::Relu:
        if (want(p[0])) {
          acc(p[0], g.cwiseProduct(val(p[0]).unaryExpr([](double x) { return x > 0.0 ? 1.0 : 0.0; })));
        }
        break;
      case Op::Tanh:
        if (want(p[0])) acc(p[0], g.cwiseProduct((1.0 - n.primal.array().square()).matrix()));
        break;
      case Op::Square:
        if (want(p[0])) acc(p[0], 2.0 * g.cwiseProduct(val(p[0])));
        break;
      case Op::Sqrt:
        if (want(p[0])) acc(p[0], g.cwiseQuotient(2.0 * n.primal));
        break;
      case Op::Sum:
        if (want(p[0])) acc(p[0], Matrix::Constant(val(p[0]).rows(), val(p[0]).cols(), g(0, 0)));
        break;
      case Op::RowSum:
        if (want(p[0])) acc(p[0], g.col(0).replicate(1, val(p[0]).cols()));
        break;
      case Op::ColMax:
      case Op::ColMaxSelect: {
        const NodeId key = p[0];
        const NodeId target = n.op == Op::ColMax ? p[0] : p[1];
        if (!want(target)) break;
        const Matrix& k = val(key);
        Matrix gx = Matrix::Zero(k.rows(), k.cols());
        for (Eigen::Index c = 0; c < k.cols(); ++c) gx(argmax_in_col(k, c), c) = g(0, c);
        acc(target, gx);
        break;
      }
      case Op::SliceRows:
        if (want(p[0])) {
          Matrix gx = Matrix::Zero(val(p[0]).rows(), val(p[0]).cols());
          gx.middleRows(n.offset, n.rows) = g;
          acc(p[0], gx);
        }
        break;
      case Op::ConcatRows: {
        Eigen::Index r = 0;
        for (NodeId q : p) {
          const Eigen::Index rows = nodes[static_cast<std::size_t>(q)].rows;
          if (want(q)) acc(q, g.middleRows(r, rows));
          r += rows;
        }
        break;
      }
      case Op::GatherRows:
        if (want(p[0])) {
          Matrix gx = Matrix::Zero(val(p[0]).rows(), val(p[0]).cols());
          for (Eigen::Index r = 0; r < n.rows; ++r) gx.row(n.indices[static_cast<std::size_t>(r)]) += g.row(r);
          acc(p[0], gx);
        }
        break;
    }
  }
  return adj;
}

}  // namespace

std::vector<Matrix> Graph::adjoints(NodeId output) const {
  checked(output);
  auto adj = backward(nodes_, output, false);
  return adj;
}

std::vector<Matrix> Graph::grad(NodeId output) const {
  checked(output);
  if (params_ == nullptr) throw std::logic_error("grad() on a graph without parameters");
  std::vector<Matrix> grads = params_->zeros_like();
  const auto adj = backward(nodes_, output, true);
  for (std::size_t i = 0; i < adj.size(); ++i) {
    if (adj[i].size() == 0 || nodes_[i].op != Op::Param) continue;
    grads[nodes_[i].param] += adj[i];
  }
  return grads;
}

std::vector<Matrix> nested_grad(const Graph& graph, NodeId output) { return graph.grad(output); }

}  // namespace mca::ad
