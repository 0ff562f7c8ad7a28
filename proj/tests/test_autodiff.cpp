#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gradmdm/autodiff.hpp"
#include "support/oracle.hpp"

using namespace gradmdm;

namespace {

NodeId weighted(Graph& g, NodeId y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return g.sum(g.hadamard(y, g.constant(oracle::uniform(rng, g.value(y).shape(), -1, 1))));
}

void expect_matches_differences(const oracle::Builder& f, const Tensor& x) {
  const Tensor tape = oracle::tape_gradient(f, x);
  const Tensor numeric = oracle::central_difference(f, x);
  EXPECT_LE(oracle::relative_error(tape, numeric), 1e-6);
}

}  // namespace

TEST(Tensor, ShapeValidation) {
  EXPECT_THROW(Tensor({2, 0}), ShapeError);
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
  Tensor t({2, 3}, 1.5);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.at(1, 2), 1.5);
  EXPECT_THROW(t.reshaped({4}), ShapeError);
  EXPECT_EQ(t.reshaped({3, 2}).shape(), (Shape{3, 2}));
}

TEST(Tensor, DotAndNorm) {
  const Tensor a = Tensor::vector({3, 4});
  const Tensor b = Tensor::vector({1, -1});
  EXPECT_DOUBLE_EQ(dot(a, b), -1.0);
  EXPECT_DOUBLE_EQ(norm2(a), 5.0);
  EXPECT_DOUBLE_EQ(max_abs_diff(a, b), 5.0);
}

TEST(Autodiff, AddBroadcastsSingleElement) {
  Graph g;
  const NodeId x = g.variable(Tensor::vector({1, 2, 3}));
  const NodeId c = g.variable(Tensor::scalar(10));
  const NodeId y = g.sum(g.add(x, c));
  EXPECT_DOUBLE_EQ(g.value(y)[0], 36.0);
  g.backward(y);
  EXPECT_EQ(g.grad(x), Tensor::vector({1, 1, 1}));
  EXPECT_EQ(g.grad(c), Tensor::scalar(3));
}

TEST(Autodiff, MismatchedShapesRejected) {
  Graph g;
  const NodeId a = g.variable(Tensor::vector({1, 2}));
  const NodeId b = g.variable(Tensor::vector({1, 2, 3}));
  EXPECT_THROW(g.add(a, b), ShapeError);
  EXPECT_THROW(g.matmul(a, b), ShapeError);
}

TEST(Autodiff, BackwardNeedsScalarRoot) {
  Graph g;
  const NodeId a = g.variable(Tensor::vector({1, 2}));
  EXPECT_THROW(g.backward(a), GraphError);
}

TEST(Autodiff, GradBeforeBackwardThrows) {
  Graph g;
  const NodeId a = g.variable(Tensor::vector({1, 2}));
  EXPECT_THROW(g.grad(a), GraphError);
}

TEST(Autodiff, ForeignNodeRejected) {
  Graph g;
  EXPECT_THROW(g.value(NodeId{3}), GraphError);
}

TEST(Autodiff, NonFiniteValuesRejected) {
  Graph g;
  const NodeId a = g.variable(Tensor::vector({0.0, 1.0}));
  EXPECT_THROW(g.pow_const(a, -1.0), GraphError);
}

TEST(Autodiff, BackwardResetsAccumulators) {
  Graph g;
  const NodeId x = g.variable(Tensor::vector({2.0}));
  const NodeId y = g.sq_l2(x);
  g.backward(y);
  g.backward(y);
  EXPECT_DOUBLE_EQ(g.grad(x)[0], 4.0);
}

TEST(Autodiff, SharedSubexpressionAccumulates) {
  Graph g;
  const NodeId x = g.variable(Tensor::vector({3.0}));
  const NodeId y = g.sum(g.hadamard(x, x));
  g.backward(y);
  EXPECT_DOUBLE_EQ(g.grad(x)[0], 6.0);
}

TEST(Autodiff, ConstantsGetNoGradient) {
  Graph g;
  const NodeId c = g.constant(Tensor::vector({1, 2}));
  const NodeId x = g.variable(Tensor::vector({3, 4}));
  g.backward(g.sum(g.hadamard(c, x)));
  EXPECT_EQ(g.grad(c), Tensor::vector({0, 0}));
  EXPECT_EQ(g.grad(x), Tensor::vector({1, 2}));
}

TEST(Autodiff, MatmulValues) {
  Graph g;
  const NodeId a = g.constant(Tensor({2, 2}, {1, 2, 3, 4}));
  const NodeId b = g.constant(Tensor({2, 1}, {5, 6}));
  EXPECT_EQ(g.value(g.matmul(a, b)), Tensor({2, 1}, {17, 39}));
}

TEST(Autodiff, ClipTiesSendZeroGradient) {
  Graph g;
  const NodeId x = g.variable(Tensor::vector({0.5, 0.2, 0.8}));
  g.backward(g.sum(g.clip_min_const(x, 0.5)));
  EXPECT_EQ(g.grad(x), Tensor::vector({0, 1, 0}));
  g.backward(g.sum(g.clip_max_const(x, 0.5)));
  EXPECT_EQ(g.grad(x), Tensor::vector({0, 0, 1}));
}

TEST(Autodiff, ReluAtZeroSendsZero) {
  Graph g;
  const NodeId x = g.variable(Tensor::vector({0.0, -1.0, 2.0}));
  g.backward(g.sum(g.relu(x)));
  EXPECT_EQ(g.grad(x), Tensor::vector({0, 0, 1}));
}

TEST(Autodiff, MaxAbsRoutesToFirstMaximiser) {
  Graph g;
  const NodeId x = g.variable(Tensor::vector({-0.3, 0.3, 0.1}));
  const NodeId m = g.max_abs(x);
  EXPECT_DOUBLE_EQ(g.value(m)[0], 0.3);
  g.backward(m);
  EXPECT_EQ(g.grad(x), Tensor::vector({-1, 0, 0}));
}

TEST(Autodiff, StraightThroughIsHardForwardIdentityBackward) {
  Graph g;
  const NodeId x = g.variable(Tensor::vector({0.49, 0.5, 0.9}));
  const NodeId s = g.straight_through(x, 0.5);
  EXPECT_EQ(g.value(s), Tensor::vector({0, 1, 1}));
  g.backward(g.sum(g.scale(s, 2.0)));
  EXPECT_EQ(g.grad(x), Tensor::vector({2, 2, 2}));
}

TEST(Autodiff, SoftmaxXentUniformIsLogC) {
  Graph g;
  const NodeId z = g.constant(Tensor::vector({0.3, 0.3, 0.3, 0.3}));
  EXPECT_NEAR(g.value(g.softmax_xent(z, 1))[0], std::log(4.0), 1e-12);
  EXPECT_THROW(g.softmax_xent(z, 4), std::invalid_argument);
}

TEST(Autodiff, SoftmaxXentConfidentIsNearZero) {
  Graph g;
  const NodeId z = g.constant(Tensor::vector({40, 0, 0}));
  EXPECT_LT(g.value(g.softmax_xent(z, 0))[0], 1e-12);
}

TEST(Autodiff, ConcatRequiresMatchingTrailingDims) {
  Graph g;
  const NodeId a = g.constant(Tensor({2, 3}));
  const NodeId b = g.constant(Tensor({1, 2}));
  EXPECT_THROW(g.concat({a, b}), ShapeError);
  EXPECT_EQ(g.value(g.concat({a, a})).shape(), (Shape{4, 3}));
}

class PrimitiveGradient : public ::testing::TestWithParam<int> {};

TEST_P(PrimitiveGradient, MatchesCentralDifferences) {
  std::mt19937_64 rng(1000 + GetParam());
  for (int instance = 0; instance < 10; ++instance) {
    const auto salt = rng();
    Tensor x = oracle::uniform(rng, {2, 3}, -1, 1);
    oracle::Builder f;
    switch (GetParam()) {
      case 0: f = [&](Graph& g, NodeId v) { return weighted(g, g.sub(v, g.scale(v, 0.3)), salt); }; break;
      case 1: f = [&](Graph& g, NodeId v) { return weighted(g, g.hadamard(v, g.sigmoid(v)), salt); }; break;
      case 2: f = [&](Graph& g, NodeId v) { return weighted(g, g.tanh(v), salt); }; break;
      case 3:
        oracle::keep_away(x, 0.0, 1e-3);
        f = [&](Graph& g, NodeId v) { return weighted(g, g.relu(v), salt); };
        break;
      case 4:
        for (auto& e : x.data()) e = std::abs(e) + 0.1;
        f = [&](Graph& g, NodeId v) { return weighted(g, g.pow_const(v, 2.7), salt); };
        break;
      case 5:
        oracle::keep_away(x, 0.1, 1e-3);
        f = [&](Graph& g, NodeId v) { return weighted(g, g.add(g.clip_min_const(v, 0.1), g.clip_max_const(v, 0.1)), salt); };
        break;
      case 6: f = [&](Graph& g, NodeId v) { return g.add(g.mean(v), g.sq_l2(v)); }; break;
      case 7: f = [&](Graph& g, NodeId v) { return g.max_abs(v); }; break;
      case 8:
        f = [&](Graph& g, NodeId v) {
          std::mt19937_64 r(salt);
          return weighted(g, g.matmul(g.constant(oracle::uniform(r, {4, 2}, -1, 1)), v), salt);
        };
        break;
      case 9: f = [&](Graph& g, NodeId v) { return weighted(g, g.concat({v, g.reshape(g.tanh(v), {2, 3})}), salt); }; break;
      case 10: f = [&](Graph& g, NodeId v) { return g.softmax_xent(g.reshape(v, {6}), 4); }; break;
      default: FAIL();
    }
    expect_matches_differences(f, x);
  }
}

INSTANTIATE_TEST_SUITE_P(AllOps, PrimitiveGradient, ::testing::Range(0, 11));
