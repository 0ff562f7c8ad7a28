#include "gradmdm/dynamic_net.hpp"

#include <cmath>
#include <algorithm>
#include <cstring>
#include <optional>
#include <random>
#include <stdexcept>

namespace gradmdm {

const char* block_kind_name(BlockKind kind) { return kind == BlockKind::skip ? "skip" : "width"; }

BlockKind parse_block_kind(const std::string& s) {
  if (s == "skip") return BlockKind::skip;
  if (s == "width") return BlockKind::width_group;
  throw std::invalid_argument("unknown block kind '" + s + "' (expected skip|width)");
}

double DynamicNet::base_flops() const {
  double f = stem.flops() + head.flops();
  for (const auto& b : blocks) f += b.gate.flops();
  return f;
}

double DynamicNet::full_flops() const {
  double f = base_flops();
  for (const auto& b : blocks) f += b.cost;
  return f;
}

std::vector<std::pair<std::string, Tensor*>> DynamicNet::named_parameters() {
  std::vector<std::pair<std::string, Tensor*>> out{{"stem.weight", &stem.weight}, {"stem.bias", &stem.bias}};
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const std::string p = "block" + std::to_string(i) + ".";
    out.emplace_back(p + "gate.weight", &blocks[i].gate.weight);
    out.emplace_back(p + "gate.bias", &blocks[i].gate.bias);
    out.emplace_back(p + "branch.weight", &blocks[i].branch.weight);
    out.emplace_back(p + "branch.bias", &blocks[i].branch.bias);
  }
  out.emplace_back("head.weight", &head.weight);
  out.emplace_back("head.bias", &head.bias);
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> DynamicNet::named_parameters() const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  for (auto& [name, t] : const_cast<DynamicNet*>(this)->named_parameters()) out.emplace_back(name, t);
  return out;
}

namespace {

void check_dense(const DenseLayer& d, const std::string& name) {
  if (d.weight.shape().size() != 2) throw std::invalid_argument(name + ": weight must be rank 2");
  if (d.bias.shape() != Shape{d.fan_out(), 1}) {
    throw std::invalid_argument(name + ": bias shape " + shape_string(d.bias.shape()) + " does not match fan_out " +
                                std::to_string(d.fan_out()));
  }
}

// Half-open index range [first, last) of the width layer starting at `first`.
std::size_t width_layer_end(const std::vector<GatedBlock>& blocks, std::size_t first) {
  std::size_t last = first;
  while (last < blocks.size() && blocks[last].kind == BlockKind::width_group &&
         blocks[last].layer == blocks[first].layer)
    ++last;
  return last;
}

}  // namespace

void DynamicNet::validate() const {
  if (blocks.empty()) throw std::invalid_argument("net needs at least one gated block");
  if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("tau must lie in (0, 1)");
  check_dense(stem, "stem");
  check_dense(head, "head");
  if (stem.fan_in() != input_dim()) throw std::invalid_argument("stem fan_in does not match input shape");
  std::size_t width = stem.fan_out();
  for (std::size_t i = 0; i < blocks.size();) {
    const auto& b = blocks[i];
    const std::string name = "block" + std::to_string(i);
    check_dense(b.gate, name + ".gate");
    check_dense(b.branch, name + ".branch");
    if (b.kind == BlockKind::skip) {
      if (b.gate.fan_in() != width || b.gate.fan_out() != 1) throw std::invalid_argument(name + ": gate shape");
      if (b.branch.fan_in() != width || b.branch.fan_out() != width) {
        throw std::invalid_argument(name + ": skip branch must map " + std::to_string(width) + " -> " +
                                    std::to_string(width));
      }
      if (b.cost != b.branch.flops()) throw std::invalid_argument(name + ": cost differs from branch FLOPs");
      ++i;
      continue;
    }
    const std::size_t end = width_layer_end(blocks, i);
    std::size_t out = 0;
    for (std::size_t k = i; k < end; ++k) {
      const auto& g = blocks[k];
      if (g.gate.fan_in() != width || g.gate.fan_out() != 1) throw std::invalid_argument(name + ": gate shape");
      if (g.branch.fan_in() != width) throw std::invalid_argument(name + ": width group fan_in");
      if (g.cost != g.branch.flops()) throw std::invalid_argument(name + ": cost differs from branch FLOPs");
      out += g.branch.fan_out();
    }
    if (out != width) throw std::invalid_argument(name + ": width groups must cover the layer width");
    i = end;
  }
  if (head.fan_in() != width) throw std::invalid_argument("head fan_in does not match hidden width");
  for (const auto& b : blocks)
    if (b.cost < 0.0) throw std::invalid_argument("negative block cost");
}

namespace {

DenseLayer random_dense(std::size_t in, std::size_t out, double sd, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, sd);
  DenseLayer d{Tensor({out, in}), Tensor({out, 1})};
  for (auto& w : d.weight.data()) w = normal(rng);
  return d;
}

}  // namespace

DynamicNet make_net(const ArchSpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  DynamicNet net;
  net.input_shape = spec.input_shape;
  net.tau = spec.tau;
  const std::size_t in = shape_numel(spec.input_shape);
  const std::size_t h = spec.hidden;
  const auto he = [](std::size_t fan_in) { return std::sqrt(2.0 / static_cast<double>(fan_in)); };
  net.stem = random_dense(in, h, he(in), rng);
  for (std::size_t l = 0; l < spec.blocks; ++l) {
    if (spec.kind == BlockKind::skip) {
      GatedBlock b;
      b.kind = BlockKind::skip;
      b.gate = random_dense(h, 1, 1.0 / std::sqrt(static_cast<double>(h)), rng);
      b.branch = random_dense(h, h, 0.5 * he(h), rng);
      b.cost = b.branch.flops();
      b.layer = l;
      net.blocks.push_back(std::move(b));
    } else {
      if (spec.groups == 0 || h % spec.groups != 0) {
        throw std::invalid_argument("hidden width must be divisible by the group count");
      }
      for (std::size_t g = 0; g < spec.groups; ++g) {
        GatedBlock b;
        b.kind = BlockKind::width_group;
        b.gate = random_dense(h, 1, 1.0 / std::sqrt(static_cast<double>(h)), rng);
        b.branch = random_dense(h, h / spec.groups, 0.5 * he(h), rng);
        b.cost = b.branch.flops();
        b.layer = l;
        net.blocks.push_back(std::move(b));
      }
    }
  }
  net.head = random_dense(h, spec.classes, 1.0 / std::sqrt(static_cast<double>(h)), rng);
  net.validate();
  return net;
}

namespace {

struct Binder {
  Graph& graph;
  bool trainable;
  std::vector<NodeId>& nodes;

  NodeId bind(const Tensor& t) {
    NodeId id = trainable ? graph.variable(t) : graph.constant(t);
    if (trainable) nodes.push_back(id);
    return id;
  }
};

struct DenseNodes {
  NodeId weight;
  NodeId bias;
};

}  // namespace

GatedForward forward_with_gates(const DynamicNet& net, Graph& graph, NodeId x, GateMode mode, bool trainable) {
  if (graph.value(x).shape() != net.input_shape) {
    throw ShapeError("input shape " + shape_string(graph.value(x).shape()) + " does not match net input " +
                     shape_string(net.input_shape));
  }
  GatedForward out;
  Binder binder{graph, trainable, out.param_nodes};
  // Bind every parameter up front so param_nodes follows named_parameters().
  auto bind_dense = [&](const DenseLayer& d) { return DenseNodes{binder.bind(d.weight), binder.bind(d.bias)}; };
  const DenseNodes stem = bind_dense(net.stem);
  std::vector<DenseNodes> gates, branches;
  for (const auto& b : net.blocks) {
    gates.push_back(bind_dense(b.gate));
    branches.push_back(bind_dense(b.branch));
  }
  const DenseNodes head = bind_dense(net.head);

  auto apply = [&](const DenseNodes& d, NodeId v) { return graph.add(graph.matmul(d.weight, v), d.bias); };
  const std::vector<double> lambda = lambda_weights(net);

  out.flops.base = net.base_flops();
  out.flops.full = net.full_flops();
  out.flops.used = out.flops.base;

  NodeId h = graph.relu(apply(stem, graph.reshape(x, {net.input_dim(), 1})));

  // Soft gate readout plus whether the branch runs.
  auto read_gate = [&](std::size_t i, NodeId input) {
    const GatedBlock& b = net.blocks[i];
    GateReadout r;
    r.index = i;
    r.node = graph.reshape(graph.sigmoid(apply(gates[i], input)), {1});
    r.value = graph.value(r.node)[0];
    r.activated = r.value >= net.tau;
    r.cost = b.cost;
    r.weight = lambda[i];
    const bool runs = mode == GateMode::force_open || r.activated;
    out.flops.per_gate.emplace_back(runs, b.cost);
    if (runs) out.flops.used += b.cost;
    out.readouts.push_back(r);
    return runs;
  };
  // Branch output as it enters the sum: gated by the hard value, or omitted.
  auto branch_output = [&](std::size_t i, NodeId input, bool runs) -> std::optional<NodeId> {
    if (mode == GateMode::straight_through) {
      NodeId hard = graph.straight_through(out.readouts.back().node, net.tau);
      return graph.hadamard(hard, graph.relu(apply(branches[i], input)));
    }
    if (!runs) return std::nullopt;
    return graph.relu(apply(branches[i], input));
  };

  for (std::size_t i = 0; i < net.blocks.size();) {
    if (net.blocks[i].kind == BlockKind::skip) {
      const bool runs = read_gate(i, h);
      if (auto y = branch_output(i, h, runs)) h = graph.add(h, *y);
      ++i;
      continue;
    }
    const std::size_t end = width_layer_end(net.blocks, i);
    std::vector<NodeId> parts;
    for (std::size_t k = i; k < end; ++k) {
      const bool runs = read_gate(k, h);
      auto y = branch_output(k, h, runs);
      parts.push_back(y ? *y : graph.constant(Tensor({net.blocks[k].branch.fan_out(), 1})));
    }
    h = graph.add(h, graph.concat(parts));
    i = end;
  }
  out.logits = graph.reshape(apply(head, h), {net.num_classes()});
  return out;
}

GatedForward forward_with_gates(const DynamicNet& net, Graph& graph, const Tensor& x, GateMode mode) {
  return forward_with_gates(net, graph, graph.constant(x), mode);
}

namespace {

Tensor dense_relu(const DenseLayer& d, const Tensor& v, bool relu) {
  Tensor y({d.fan_out(), 1});
  for (std::size_t r = 0; r < d.fan_out(); ++r) {
    double s = d.bias[r];
    for (std::size_t c = 0; c < d.fan_in(); ++c) s += d.weight.at(r, c) * v[c];
    y[r] = relu ? std::max(s, 0.0) : s;
  }
  return y;
}

}  // namespace

Tensor forward_full(const DynamicNet& net, const Tensor& x) {
  if (x.shape() != net.input_shape) throw ShapeError("forward_full: input shape mismatch");
  Tensor h = dense_relu(net.stem, x.reshaped({net.input_dim(), 1}), true);
  for (std::size_t i = 0; i < net.blocks.size();) {
    if (net.blocks[i].kind == BlockKind::skip) {
      const Tensor y = dense_relu(net.blocks[i].branch, h, true);
      for (std::size_t k = 0; k < h.size(); ++k) h[k] += y[k];
      ++i;
      continue;
    }
    const std::size_t end = width_layer_end(net.blocks, i);
    Tensor next = h;
    std::size_t offset = 0;
    for (std::size_t k = i; k < end; ++k) {
      const Tensor y = dense_relu(net.blocks[k].branch, h, true);
      for (std::size_t r = 0; r < y.size(); ++r) next[offset + r] += y[r];
      offset += y.size();
    }
    h = std::move(next);
    i = end;
  }
  return dense_relu(net.head, h, false).reshaped({net.num_classes()});
}

FlopsReport inference_flops(const DynamicNet& net, const Tensor& x) {
  Graph g;
  return forward_with_gates(net, g, x).flops;
}

std::vector<bool> activation_pattern(const DynamicNet& net, const Tensor& x) {
  Graph g;
  std::vector<bool> pattern;
  for (const auto& r : forward_with_gates(net, g, x).readouts) pattern.push_back(r.activated);
  return pattern;
}

std::vector<double> lambda_weights(std::span<const double> costs) {
  double total = 0.0;
  for (double c : costs) {
    if (c < 0.0) throw std::invalid_argument("lambda_weights: negative cost");
    total += c;
  }
  if (!(total > 0.0)) throw std::invalid_argument("lambda_weights: all gate costs are zero");
  std::vector<double> out;
  out.reserve(costs.size());
  for (double c : costs) out.push_back(c / total);
  return out;
}

std::vector<double> lambda_weights(const DynamicNet& net) {
  std::vector<double> costs;
  for (const auto& b : net.blocks) costs.push_back(b.cost);
  return lambda_weights(costs);
}

std::uint64_t weight_checksum(const DynamicNet& net) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  };
  mix(&net.tau, sizeof net.tau);
  for (const auto& b : net.blocks) {
    mix(&b.kind, sizeof b.kind);
    mix(&b.cost, sizeof b.cost);
  }
  for (const auto& [name, t] : net.named_parameters()) {
    mix(name.data(), name.size());
    for (auto d : t->shape()) mix(&d, sizeof d);
    mix(t->data().data(), t->size() * sizeof(double));
  }
  return h;
}

}  // namespace gradmdm
