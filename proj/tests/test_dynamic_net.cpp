#include <gtest/gtest.h>

#include <numeric>
#include <random>

#include "gradmdm/dynamic_net.hpp"
#include "support/oracle.hpp"

using namespace gradmdm;

namespace {

ArchSpec width_spec() {
  ArchSpec s;
  s.kind = BlockKind::width_group;
  s.blocks = 3;
  return s;
}

}  // namespace

TEST(DynamicNet, SkipArchitecture) {
  const DynamicNet net = make_net(ArchSpec{}, 1);
  EXPECT_EQ(net.num_gates(), 6u);
  EXPECT_EQ(net.num_classes(), 4u);
  for (const auto& b : net.blocks) EXPECT_DOUBLE_EQ(b.cost, 2.0 * 32 * 32);
  EXPECT_NO_THROW(net.validate());
}

TEST(DynamicNet, WidthArchitecture) {
  const DynamicNet net = make_net(width_spec(), 1);
  EXPECT_EQ(net.num_gates(), 12u);
  for (std::size_t i = 0; i < net.blocks.size(); ++i) {
    EXPECT_EQ(net.blocks[i].layer, i / 4);
    EXPECT_DOUBLE_EQ(net.blocks[i].cost, 2.0 * 32 * 8);
  }
}

TEST(DynamicNet, FlopsAccounting) {
  const DynamicNet net = make_net(ArchSpec{}, 2);
  double costs = 0.0;
  for (const auto& b : net.blocks) costs += b.cost;
  EXPECT_DOUBLE_EQ(net.full_flops(), net.base_flops() + costs);
  // stem 64->32, head 32->4, six gates 32->1
  EXPECT_DOUBLE_EQ(net.base_flops(), 2.0 * 64 * 32 + 2.0 * 32 * 4 + 6 * 2.0 * 32);

  std::mt19937_64 rng(3);
  for (int i = 0; i < 20; ++i) {
    const Tensor x = oracle::uniform(rng, {1, 8, 8}, 0, 1);
    const FlopsReport r = inference_flops(net, x);
    double used = r.base;
    for (const auto& [on, c] : r.per_gate) used += on ? c : 0.0;
    EXPECT_DOUBLE_EQ(r.used, used);
    EXPECT_GE(r.used, r.base);
    EXPECT_LE(r.used, r.full);
  }
}

TEST(DynamicNet, ActivationFollowsThreshold) {
  const DynamicNet net = make_net(ArchSpec{}, 4);
  Graph g;
  const Tensor x({1, 8, 8}, 0.5);
  const auto fwd = forward_with_gates(net, g, x);
  const auto pattern = activation_pattern(net, x);
  for (std::size_t i = 0; i < fwd.readouts.size(); ++i) {
    EXPECT_EQ(fwd.readouts[i].activated, fwd.readouts[i].value >= net.tau);
    EXPECT_EQ(pattern[i], fwd.readouts[i].activated);
  }
}

TEST(DynamicNet, ForceOpenMatchesReferenceForward) {
  for (const ArchSpec& spec : {ArchSpec{}, width_spec()}) {
    const DynamicNet net = make_net(spec, 5);
    std::mt19937_64 rng(6);
    for (int i = 0; i < 10; ++i) {
      const Tensor x = oracle::uniform(rng, {1, 8, 8}, 0, 1);
      Graph g;
      const auto fwd = forward_with_gates(net, g, x, GateMode::force_open);
      const Tensor ref = forward_full(net, x);
      EXPECT_LE(max_abs_diff(g.value(fwd.logits), ref), 1e-12);
      EXPECT_DOUBLE_EQ(fwd.flops.used, net.full_flops());
    }
  }
}

TEST(DynamicNet, HardModeEqualsReferenceWhenAllGatesOpen) {
  DynamicNet net = make_net(ArchSpec{}, 8);
  net.tau = 1e-9;  // every sigmoid output clears it
  const Tensor x({1, 8, 8}, 0.3);
  Graph g;
  const auto fwd = forward_with_gates(net, g, x);
  EXPECT_LE(max_abs_diff(g.value(fwd.logits), forward_full(net, x)), 1e-12);
}

TEST(DynamicNet, InputShapeChecked) {
  const DynamicNet net = make_net(ArchSpec{}, 1);
  Graph g;
  EXPECT_THROW(forward_with_gates(net, g, Tensor({1, 4, 4})), ShapeError);
}

TEST(DynamicNet, LambdaIsCostShare) {
  const DynamicNet net = make_net(width_spec(), 1);
  const auto l = lambda_weights(net);
  EXPECT_NEAR(std::accumulate(l.begin(), l.end(), 0.0), 1.0, 1e-15);
  for (double v : l) EXPECT_DOUBLE_EQ(v, 1.0 / 12.0);
  const std::vector<double> costs{1, 3};
  EXPECT_EQ(lambda_weights(costs), (std::vector<double>{0.25, 0.75}));
  const std::vector<double> zeros{0, 0};
  EXPECT_THROW(lambda_weights(zeros), std::invalid_argument);
}

TEST(DynamicNet, SeedDeterminesWeights) {
  EXPECT_EQ(weight_checksum(make_net(ArchSpec{}, 9)), weight_checksum(make_net(ArchSpec{}, 9)));
  EXPECT_NE(weight_checksum(make_net(ArchSpec{}, 9)), weight_checksum(make_net(ArchSpec{}, 10)));
}

TEST(DynamicNet, ChecksumSeesEveryWeight) {
  DynamicNet net = make_net(ArchSpec{}, 9);
  const auto before = weight_checksum(net);
  auto params = net.named_parameters();
  (*params.back().second)[0] += 1e-9;
  EXPECT_NE(weight_checksum(net), before);
}

TEST(DynamicNet, ParameterOrder) {
  const DynamicNet net = make_net(ArchSpec{}, 1);
  const auto params = net.named_parameters();
  ASSERT_EQ(params.size(), 2u + 4u * 6u + 2u);
  EXPECT_EQ(params.front().first, "stem.weight");
  EXPECT_EQ(params[2].first, "block0.gate.weight");
  EXPECT_EQ(params.back().first, "head.bias");
}

TEST(DynamicNet, ValidateCatchesBrokenNets) {
  DynamicNet net = make_net(ArchSpec{}, 1);
  net.blocks[2].cost = -1.0;
  EXPECT_THROW(net.validate(), std::invalid_argument);
  net = make_net(ArchSpec{}, 1);
  net.tau = 1.5;
  EXPECT_THROW(net.validate(), std::invalid_argument);
}

TEST(DynamicNet, ParseBlockKind) {
  EXPECT_EQ(parse_block_kind("skip"), BlockKind::skip);
  EXPECT_EQ(parse_block_kind("width"), BlockKind::width_group);
  EXPECT_THROW(parse_block_kind("depth"), std::invalid_argument);
}
