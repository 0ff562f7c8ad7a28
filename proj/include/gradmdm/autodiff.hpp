#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "gradmdm/tensor.hpp"

namespace gradmdm {

/// Handle to a node in a Graph arena. Only meaningful for the graph that issued it.
struct NodeId {
  std::size_t index = 0;
  friend bool operator==(NodeId, NodeId) = default;
};

enum class Op {
  variable,
  constant,
  add,
  sub,
  hadamard,
  matmul,
  scale,
  sigmoid,
  tanh,
  relu,
  pow_const,
  clip_min_const,
  clip_max_const,
  sum,
  mean,
  sq_l2,
  max_abs,
  reshape,
  concat,
  straight_through,
  softmax_xent,
};

const char* op_name(Op op);

class GraphError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Reverse-mode tape over dense tensors.
///
/// Nodes live in an arena ordered by insertion, so parents always precede
/// children and a reverse sweep of the arena is a valid topological order.
/// Elementwise binary ops accept equal shapes or a single-element operand,
/// which is broadcast; nothing else broadcasts.
///
/// Kinks use a fixed subgradient: min(x, c) and max(x, c) pass gradient to x
/// only when x is strictly on the unclipped side, so ties send zero. relu
/// follows the same rule at 0 and max_abs routes to the first maximiser.
///
/// A Graph is not thread-safe; use one per thread.
class Graph {
 public:
  NodeId variable(Tensor value);
  NodeId constant(Tensor value);

  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId hadamard(NodeId a, NodeId b);
  NodeId matmul(NodeId a, NodeId b);
  NodeId scale(NodeId a, double c);
  NodeId sigmoid(NodeId a);
  NodeId tanh(NodeId a);
  NodeId relu(NodeId a);
  NodeId pow_const(NodeId a, double exponent);
  NodeId clip_min_const(NodeId a, double c);  // min(a, c)
  NodeId clip_max_const(NodeId a, double c);  // max(a, c)
  NodeId sum(NodeId a);
  NodeId mean(NodeId a);
  NodeId sq_l2(NodeId a);
  NodeId max_abs(NodeId a);
  NodeId reshape(NodeId a, Shape shape);
  // Concatenates along the leading axis; trailing dims must agree.
  NodeId concat(const std::vector<NodeId>& parts);
  // Forward: 1 if a >= threshold else 0. Backward: identity.
  NodeId straight_through(NodeId a, double threshold);
  // Softmax cross-entropy of a logit vector against a class index.
  NodeId softmax_xent(NodeId logits, std::size_t label);

  const Tensor& value(NodeId id) const { return node(id).value; }
  // Gradient accumulated by the last backward(); zeros for nodes outside the
  // root's cone or created as constants.
  const Tensor& grad(NodeId id) const;
  Op op(NodeId id) const { return node(id).op; }
  std::size_t size() const { return nodes_.size(); }

  /// Resets every accumulator, then accumulates d(root)/d(node) into each
  /// node that depends on a variable. Root must hold exactly one element.
  void backward(NodeId root);

 private:
  struct Node {
    Op op;
    std::vector<NodeId> inputs;
    Tensor value;
    Tensor grad;
    double param = 0.0;
    std::size_t index_param = 0;
    bool requires_grad = false;
  };

  const Node& node(NodeId id) const;
  NodeId push(Op op, std::vector<NodeId> inputs, Tensor value, double param = 0.0,
              std::size_t index_param = 0);
  Tensor elementwise(NodeId a, NodeId b, Op op) const;
  void backprop_node(std::size_t index);

  std::vector<Node> nodes_;
};

}  // namespace gradmdm
