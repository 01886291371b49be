#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "mcatlas/autodiff.hpp"
#include "mcatlas/errors.hpp"
#include "test_support.hpp"

namespace mca {
namespace {

using ad::Graph;
using ad::Matrix;
using ad::NodeId;
using ad::ParameterSet;
using testing::finite_difference_gradient;
using testing::max_relative_error;
using testing::random_matrix;

// Builds a scalar loss from two parameter blocks through one unary/binary op.
using Builder = std::function<NodeId(Graph&, NodeId, NodeId)>;

double relative_gradient_error(const Builder& build, Matrix x, Matrix y) {
  ParameterSet params;
  params.add("x", std::move(x));
  params.add("y", std::move(y));
  auto loss = [&]() {
    Graph g(&params);
    const NodeId out = build(g, g.param(0), g.param(1));
    g.eval();
    return std::pair<Graph, NodeId>(std::move(g), out);
  };
  auto [g, out] = loss();
  const auto analytic = g.grad(out);
  const auto numeric = finite_difference_gradient(params, [&]() {
    auto [h, o] = loss();
    return h.scalar(o);
  });
  return max_relative_error(analytic, numeric);
}

// Weighted sum so every output entry has a distinct adjoint.
NodeId weighted(Graph& g, NodeId x, std::uint64_t seed = 11) {
  Rng rng(seed);
  const auto& n = g.node(x);
  return g.sum(g.mul(x, g.constant(random_matrix(n.rows, n.cols, rng))));
}

TEST(Autodiff, ElementwiseOpsMatchFiniteDifferences) {
  Rng rng(1);
  const Matrix x = random_matrix(4, 3, rng);
  Matrix y = random_matrix(4, 3, rng);
  y.array() += 2.5;
  const std::vector<std::pair<const char*, Builder>> cases = {
      {"add", [](Graph& g, NodeId a, NodeId b) { return weighted(g, g.add(a, b)); }},
      {"sub", [](Graph& g, NodeId a, NodeId b) { return weighted(g, g.sub(a, b)); }},
      {"mul", [](Graph& g, NodeId a, NodeId b) { return weighted(g, g.mul(a, b)); }},
      {"div", [](Graph& g, NodeId a, NodeId b) { return weighted(g, g.div(a, b)); }},
      {"scale", [](Graph& g, NodeId a, NodeId) { return weighted(g, g.scale(a, -1.7)); }},
      {"affine", [](Graph& g, NodeId a, NodeId) { return weighted(g, g.affine(a, 0.3, 2.0)); }},
      {"softplus", [](Graph& g, NodeId a, NodeId) { return weighted(g, g.softplus(a)); }},
      {"sigmoid", [](Graph& g, NodeId a, NodeId) { return weighted(g, g.sigmoid(a)); }},
      {"tanh", [](Graph& g, NodeId a, NodeId) { return weighted(g, g.tanh(a)); }},
      {"square", [](Graph& g, NodeId a, NodeId) { return weighted(g, g.square(a)); }},
      {"sqrt", [](Graph& g, NodeId, NodeId b) { return weighted(g, g.sqrt(b)); }},
      {"relu", [](Graph& g, NodeId a, NodeId) { return weighted(g, g.relu(a)); }},
      {"row_sum", [](Graph& g, NodeId a, NodeId) { return weighted(g, g.row_sum(a)); }},
      {"col_max", [](Graph& g, NodeId a, NodeId) { return weighted(g, g.col_max(a)); }},
      {"col_max_select", [](Graph& g, NodeId a, NodeId b) { return weighted(g, g.col_max_select(a, b)); }},
      {"slice_rows", [](Graph& g, NodeId a, NodeId) { return weighted(g, g.slice_rows(a, 1, 2)); }},
      {"gather_rows", [](Graph& g, NodeId a, NodeId) { return weighted(g, g.gather_rows(a, {3, 0, 0, 2, 3})); }},
      {"concat_rows",
       [](Graph& g, NodeId a, NodeId b) {
         const NodeId parts[] = {a, b, a};
         return weighted(g, g.concat_rows(parts));
       }},
  };
  for (const auto& [name, build] : cases) {
    EXPECT_LT(relative_gradient_error(build, x, y), 1e-7) << name;
  }
}

TEST(Autodiff, MatrixOpsMatchFiniteDifferences) {
  Rng rng(2);
  EXPECT_LT(relative_gradient_error([](Graph& g, NodeId a, NodeId b) { return weighted(g, g.matmul(a, b)); },
                                    random_matrix(5, 3, rng), random_matrix(3, 4, rng)),
            1e-7);
  EXPECT_LT(relative_gradient_error([](Graph& g, NodeId a, NodeId b) { return weighted(g, g.add_row(a, b)); },
                                    random_matrix(5, 3, rng), random_matrix(1, 3, rng)),
            1e-7);
  EXPECT_LT(relative_gradient_error(
                [](Graph& g, NodeId a, NodeId) { return weighted(g, g.broadcast_rows(g.slice_rows(a, 0, 1), 4)); },
                random_matrix(2, 3, rng), random_matrix(1, 1, rng)),
            1e-7);
}

TEST(Autodiff, ParameterUsedTwiceAccumulates) {
  ParameterSet p;
  p.add("w", Matrix::Constant(1, 1, 3.0));
  Graph g(&p);
  const NodeId w = g.param(0);
  const NodeId out = g.sum(g.mul(w, w));  // w^2
  g.eval();
  EXPECT_DOUBLE_EQ(g.grad(out)[0](0, 0), 6.0);
}

TEST(Autodiff, UnusedParameterGetsZeroGradient) {
  ParameterSet p;
  p.add("used", Matrix::Constant(2, 2, 1.0));
  p.add("unused", Matrix::Constant(3, 1, 1.0));
  Graph g(&p);
  const NodeId out = g.sum(g.param(0));
  g.eval();
  const auto grad = g.grad(out);
  ASSERT_EQ(grad.size(), 2u);
  EXPECT_EQ(grad[1].rows(), 3);
  EXPECT_TRUE(grad[1].isZero(0.0));
}

TEST(Autodiff, ReluSubgradientAtZeroIsZero) {
  ParameterSet p;
  p.add("x", Matrix::Zero(1, 1));
  Graph g(&p);
  const NodeId out = g.sum(g.relu(g.param(0)));
  g.eval();
  EXPECT_EQ(g.grad(out)[0](0, 0), 0.0);
}

TEST(Autodiff, ColMaxTiesPickLowestRow) {
  ParameterSet p;
  Matrix x(3, 1);
  x << 2.0, 2.0, 1.0;
  p.add("x", x);
  Graph g(&p);
  const NodeId out = g.sum(g.col_max(g.param(0)));
  g.eval();
  const Matrix grad = g.grad(out)[0];
  EXPECT_EQ(grad(0, 0), 1.0);
  EXPECT_EQ(grad(1, 0), 0.0);
}

TEST(Autodiff, SoftplusAndSigmoidAreStable) {
  EXPECT_DOUBLE_EQ(ad::softplus(1000.0), 1000.0);
  EXPECT_EQ(ad::softplus(-1000.0), 0.0);
  EXPECT_NEAR(ad::softplus(0.0), std::log(2.0), 1e-15);
  EXPECT_NEAR(ad::softplus(-40.0), std::exp(-40.0), 1e-30);
  EXPECT_DOUBLE_EQ(ad::sigmoid(1000.0), 1.0);
  EXPECT_EQ(ad::sigmoid(-1000.0), 0.0);
  EXPECT_DOUBLE_EQ(ad::sigmoid(0.0), 0.5);
}

TEST(Autodiff, InputsBindAndReevaluate) {
  Graph g;
  const NodeId x = g.input("x", 2, 1);
  const NodeId out = g.sum(g.square(x));
  Matrix v(2, 1);
  v << 1.0, 2.0;
  g.eval({{"x", v}});
  EXPECT_DOUBLE_EQ(g.scalar(out), 5.0);
}

TEST(Autodiff, UnboundInputThrows) {
  Graph g;
  const NodeId x = g.input("x", 1, 1);
  g.sum(x);
  EXPECT_THROW(g.eval(), std::invalid_argument);
}

TEST(Autodiff, NonFiniteValueNamesTheNode) {
  Graph g;
  const NodeId x = g.constant(Matrix::Constant(1, 1, -1.0));
  const NodeId bad = g.sqrt(x);
  try {
    g.eval();
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find(std::to_string(bad)), std::string::npos) << msg;
    EXPECT_NE(msg.find("sqrt"), std::string::npos) << msg;
  }
}

TEST(Autodiff, GradOfNonScalarThrows) {
  ParameterSet p;
  p.add("x", Matrix::Ones(2, 2));
  Graph g(&p);
  const NodeId y = g.square(g.param(0));
  g.eval();
  EXPECT_THROW(g.grad(y), std::invalid_argument);
}

TEST(Autodiff, ShapeMismatchThrows) {
  Graph g;
  const NodeId a = g.constant(Matrix::Ones(2, 2));
  const NodeId b = g.constant(Matrix::Ones(3, 2));
  EXPECT_THROW(g.add(a, b), std::invalid_argument);
  EXPECT_THROW(g.matmul(a, b), std::invalid_argument);
}

TEST(Autodiff, JvpSeedDimensionMismatchThrows) {
  Graph g;
  const NodeId x = g.constant(Matrix::Ones(3, 2));
  const NodeId y = g.tanh(x);
  g.eval();
  try {
    g.jvp(x, {Matrix::Ones(2, 2), Matrix::Ones(2, 2)}, y);
    FAIL() << "expected a throw";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("jvp seed dimension mismatch"), std::string::npos);
  }
}

TEST(Autodiff, JvpMatchesFiniteDifferences) {
  Rng rng(5);
  const Matrix x0 = random_matrix(6, 2, rng);
  const Matrix w1 = random_matrix(2, 5, rng);
  const Matrix w2 = random_matrix(5, 3, rng);
  const Matrix b1 = random_matrix(1, 5, rng);
  auto f = [&](const Matrix& x) -> Matrix {
    Graph g;
    const NodeId h = g.softplus(g.add_row(g.matmul(g.constant(x), g.constant(w1)), g.constant(b1)));
    const NodeId y = g.tanh(g.matmul(h, g.constant(w2)));
    g.eval();
    return g.value(y);
  };
  Graph g;
  const NodeId x = g.constant(x0);
  const NodeId h = g.softplus(g.add_row(g.matmul(x, g.constant(w1)), g.constant(b1)));
  const NodeId y = g.tanh(g.matmul(h, g.constant(w2)));
  const Matrix s0 = random_matrix(6, 2, rng);
  const Matrix s1 = random_matrix(6, 2, rng);
  const auto t = g.jvp(x, {s0, s1}, y);
  g.eval();
  const double eps = 1e-6;
  for (int c = 0; c < 2; ++c) {
    const Matrix& s = c == 0 ? s0 : s1;
    const Matrix fd = (f(x0 + eps * s) - f(x0 - eps * s)) / (2.0 * eps);
    EXPECT_LT((g.value(t[static_cast<std::size_t>(c)]) - fd).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(Autodiff, JvpOfIndependentOutputIsZeroConstant) {
  Graph g;
  const NodeId x = g.constant(Matrix::Ones(2, 2));
  const NodeId other = g.constant(Matrix::Ones(2, 2));
  const NodeId y = g.square(other);
  const auto t = g.jvp(x, {Matrix::Ones(2, 2), Matrix::Ones(2, 2)}, y);
  g.eval();
  EXPECT_TRUE(g.value(t[0]).isZero(0.0));
  EXPECT_EQ(g.node(t[0]).op, ad::Op::Const);
}

// Loss depending on parameters through a Jacobian: L = sum (dy/du)^2.
TEST(Autodiff, ForwardOverReverseMatchesFiniteDifferences) {
  Rng rng(9);
  ParameterSet p;
  p.add("w1", random_matrix(2, 6, rng));
  p.add("b1", random_matrix(1, 6, rng));
  p.add("w2", random_matrix(6, 3, rng));
  const Matrix uv = random_matrix(7, 2, rng);
  Matrix eu = Matrix::Zero(7, 2);
  eu.col(0).setOnes();
  Matrix ev = Matrix::Zero(7, 2);
  ev.col(1).setOnes();
  auto build = [&](Graph& g) {
    const NodeId x = g.constant(uv);
    const NodeId h = g.softplus(g.add_row(g.matmul(x, g.param(0)), g.param(1)));
    const NodeId y = g.matmul(g.sigmoid(h), g.param(2));
    const auto t = g.jvp(x, {eu, ev}, y);
    return g.add(g.sum(g.square(t[0])), g.scale(g.sum(g.mul(t[0], t[1])), 0.5));
  };
  Graph g(&p);
  const NodeId out = build(g);
  g.eval();
  const auto analytic = ad::nested_grad(g, out);
  const auto numeric = finite_difference_gradient(p, [&]() {
    Graph h(&p);
    const NodeId o = build(h);
    h.eval();
    return h.scalar(o);
  });
  EXPECT_LT(max_relative_error(analytic, numeric), 1e-6);
}

TEST(Autodiff, IncrementalEvalOnlyComputesNewNodes) {
  Graph g;
  const NodeId a = g.constant(Matrix::Constant(1, 1, 2.0));
  const NodeId b = g.square(a);
  g.eval();
  const NodeId c = g.add(b, a);
  g.eval();
  EXPECT_DOUBLE_EQ(g.scalar(c), 6.0);
}

}  // namespace
}  // namespace mca
