#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gradmdm/autodiff.hpp"
#include "gradmdm/tensor.hpp"

namespace gradmdm {

/// y = W x + b on column vectors; W is out x in, b is out x 1.
struct DenseLayer {
  Tensor weight;
  Tensor bias;

  std::size_t fan_in() const { return weight.shape()[1]; }
  std::size_t fan_out() const { return weight.shape()[0]; }
  // Multiply-accumulate count, 2 * fan_in * fan_out.
  double flops() const { return 2.0 * static_cast<double>(fan_in()) * static_cast<double>(fan_out()); }
};

enum class BlockKind { skip, width_group };

const char* block_kind_name(BlockKind kind);
BlockKind parse_block_kind(const std::string& s);

/// One gate and the optional computation it controls.
///
/// skip: the branch is residual, h -> h + relu(branch(h)); skipping passes h.
/// width_group: the branch produces one slice of a gated layer; a skipped
/// group contributes zeros to its slice. Groups sharing `layer` form one
/// residual layer whose gates all read the layer input.
struct GatedBlock {
  BlockKind kind = BlockKind::skip;
  DenseLayer gate;    // fan_out 1, followed by sigmoid
  DenseLayer branch;
  double cost = 0.0;  // FLOPs of the branch
  std::size_t layer = 0;
};

struct DynamicNet {
  Shape input_shape{1, 8, 8};
  DenseLayer stem;
  std::vector<GatedBlock> blocks;
  DenseLayer head;
  double tau = 0.5;

  std::size_t input_dim() const { return shape_numel(input_shape); }
  std::size_t num_classes() const { return head.fan_out(); }
  std::size_t num_gates() const { return blocks.size(); }
  // Always-executed FLOPs: stem, head and every gate subnet.
  double base_flops() const;
  double full_flops() const;

  // Stable order used by training and checkpoints.
  std::vector<std::pair<std::string, Tensor*>> named_parameters();
  std::vector<std::pair<std::string, const Tensor*>> named_parameters() const;

  /// Throws std::invalid_argument when an architectural invariant fails.
  void validate() const;
};

struct ArchSpec {
  BlockKind kind = BlockKind::skip;
  std::size_t hidden = 32;
  std::size_t blocks = 6;       // skip blocks, or gated width layers
  std::size_t groups = 4;       // width only
  std::size_t classes = 4;
  double tau = 0.5;
  Shape input_shape{1, 8, 8};
};

/// Fresh net with scaled-normal weights drawn from `seed`.
DynamicNet make_net(const ArchSpec& spec, std::uint64_t seed);

struct GateReadout {
  std::size_t index = 0;
  NodeId node;  // soft gate value, shape [1]
  double value = 0.0;
  bool activated = false;
  double cost = 0.0;
  double weight = 0.0;
};

struct FlopsReport {
  double base = 0.0;
  double full = 0.0;
  double used = 0.0;
  std::vector<std::pair<bool, double>> per_gate;  // (activated, cost)
};

enum class GateMode {
  hard,              // branch runs iff G >= tau
  force_open,        // every branch runs
  straight_through,  // branch always computed, scaled by the hard gate; gradient passes to G
};

struct GatedForward {
  NodeId logits;
  std::vector<GateReadout> readouts;
  FlopsReport flops;
  std::vector<NodeId> param_nodes;  // aligned with named_parameters() when trainable
};

/// Builds the forward pass of `net` on the graph node `x` (shape input_shape).
/// Weights enter as constants unless `trainable`, in which case they become
/// variables listed in `param_nodes`.
GatedForward forward_with_gates(const DynamicNet& net, Graph& graph, NodeId x, GateMode mode = GateMode::hard,
                                bool trainable = false);
GatedForward forward_with_gates(const DynamicNet& net, Graph& graph, const Tensor& x,
                                GateMode mode = GateMode::hard);

/// Ungated reference forward: every branch executes, computed directly on
/// tensors without a graph.
Tensor forward_full(const DynamicNet& net, const Tensor& x);

/// FLOPs and gate pattern of a clean inference.
FlopsReport inference_flops(const DynamicNet& net, const Tensor& x);
std::vector<bool> activation_pattern(const DynamicNet& net, const Tensor& x);

/// lambda_i = C_i / sum_j C_j. Throws if every cost is zero.
std::vector<double> lambda_weights(std::span<const double> costs);
std::vector<double> lambda_weights(const DynamicNet& net);

/// Order-sensitive hash of architecture and weights.
std::uint64_t weight_checksum(const DynamicNet& net);

}  // namespace gradmdm
