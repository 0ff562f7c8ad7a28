#include "gradmdm/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace gradmdm {

Mapping parse_mapping(const std::string& s) {
  if (s == "tanh") return Mapping::tanh;
  if (s == "clamp") return Mapping::clamp;
  if (s == "tanh-literal") return Mapping::tanh_literal;
  throw std::invalid_argument("unknown mapping '" + s + "' (expected tanh|clamp|tanh-literal)");
}

Norm parse_norm(const std::string& s) {
  if (s == "l2") return Norm::l2;
  if (s == "linf") return Norm::linf;
  throw std::invalid_argument("unknown norm '" + s + "' (expected l2|linf)");
}

const char* mapping_name(Mapping m) {
  switch (m) {
    case Mapping::tanh: return "tanh";
    case Mapping::clamp: return "clamp";
    case Mapping::tanh_literal: return "tanh-literal";
  }
  return "?";
}

const char* norm_name(Norm n) { return n == Norm::l2 ? "l2" : "linf"; }

NodeId map_input(Graph& graph, const Tensor& x0, NodeId delta, Mapping mode, double eps) {
  if (graph.value(delta).shape() != x0.shape()) {
    throw ShapeError("map_input: perturbation " + shape_string(graph.value(delta).shape()) + " vs input " +
                     shape_string(x0.shape()));
  }
  switch (mode) {
    case Mapping::tanh: {
      Tensor w0(x0.shape());
      for (std::size_t i = 0; i < x0.size(); ++i) w0[i] = std::atanh(2.0 * std::clamp(x0[i], eps, 1.0 - eps) - 1.0);
      NodeId t = graph.tanh(graph.add(graph.constant(std::move(w0)), delta));
      return graph.scale(graph.add(t, graph.constant(Tensor::scalar(1.0))), 0.5);
    }
    case Mapping::tanh_literal: {
      NodeId t = graph.tanh(graph.add(graph.constant(x0), delta));
      return graph.scale(graph.add(t, graph.constant(Tensor::scalar(1.0))), 0.5);
    }
    case Mapping::clamp:
      return graph.clip_min_const(graph.clip_max_const(graph.add(graph.constant(x0), delta), 0.0), 1.0);
  }
  throw std::invalid_argument("map_input: unknown mapping");
}

Tensor map_input(const Tensor& x0, const Tensor& delta, Mapping mode, double eps) {
  Graph g;
  return g.value(map_input(g, x0, g.constant(delta), mode, eps));
}

NodeId imperceptibility_loss(Graph& graph, NodeId x0, NodeId perturbed, Norm norm) {
  NodeId diff = graph.sub(perturbed, x0);
  return norm == Norm::l2 ? graph.sq_l2(diff) : graph.max_abs(diff);
}

namespace {

NodeId stacked_gates(Graph& graph, std::span<const GateReadout> readouts, std::span<const double> lambda) {
  if (readouts.empty()) throw std::invalid_argument("gate loss: no gates");
  if (lambda.size() != readouts.size()) throw std::invalid_argument("gate loss: lambda not aligned with readouts");
  std::vector<NodeId> nodes;
  nodes.reserve(readouts.size());
  for (const auto& r : readouts) nodes.push_back(r.node);
  return graph.concat(nodes);
}

// -sum_i lambda_i * term_i
NodeId negated_weighted_sum(Graph& graph, NodeId terms, std::span<const double> lambda) {
  NodeId w = graph.constant(Tensor::vector(std::vector<double>(lambda.begin(), lambda.end())));
  return graph.scale(graph.sum(graph.hadamard(terms, w)), -1.0);
}

}  // namespace

NodeId complexity_loss(Graph& graph, std::span<const GateReadout> readouts, double tau,
                       std::span<const double> lambda) {
  return negated_weighted_sum(graph, graph.clip_min_const(stacked_gates(graph, readouts, lambda), tau), lambda);
}

NodeId power_loss(Graph& graph, std::span<const GateReadout> readouts, double tau, std::span<const double> lambda,
                  double alpha) {
  if (!(alpha >= 1.0)) throw std::invalid_argument("power_loss: alpha must be >= 1");
  NodeId clipped = graph.clip_min_const(stacked_gates(graph, readouts, lambda), tau);
  return negated_weighted_sum(graph, graph.pow_const(clipped, alpha), lambda);
}

NodeId finished_loss(Graph& graph, std::span<const GateReadout> readouts, double tau,
                     std::span<const double> lambda) {
  return negated_weighted_sum(graph, graph.clip_max_const(stacked_gates(graph, readouts, lambda), tau), lambda);
}

NodeId relaxed_gate_term(Graph& graph, std::span<const GateReadout> readouts, double tau,
                         std::span<const double> lambda) {
  NodeId shifted = graph.sub(stacked_gates(graph, readouts, lambda), graph.constant(Tensor::scalar(tau)));
  return negated_weighted_sum(graph, shifted, lambda);
}

NodeId relaxed_loss(Graph& graph, NodeId imperceptibility, std::span<const GateReadout> readouts, double gamma,
                    double tau, std::span<const double> lambda) {
  return graph.add(graph.scale(imperceptibility, gamma), relaxed_gate_term(graph, readouts, tau, lambda));
}

NodeId classification_loss(Graph& graph, NodeId logits, std::size_t label) { return graph.softmax_xent(logits, label); }

}  // namespace gradmdm
