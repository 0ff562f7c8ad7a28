#pragma once

#include <cstddef>
#include <span>
#include <string>

#include "gradmdm/autodiff.hpp"
#include "gradmdm/dynamic_net.hpp"

namespace gradmdm {

enum class Mapping {
  tanh,          // x' = (tanh(atanh(2x - 1) + delta) + 1) / 2, identity at delta = 0
  clamp,         // x' = clamp(x + delta, 0, 1)
  tanh_literal,  // x' = (tanh(x + delta) + 1) / 2, not the identity at delta = 0
};

enum class Norm { l2, linf };

Mapping parse_mapping(const std::string& s);
Norm parse_norm(const std::string& s);
const char* mapping_name(Mapping m);
const char* norm_name(Norm n);

constexpr double kDefaultMapEpsilon = 1e-6;

/// Perturbed input as a graph node. `delta` must have x0's shape; x0 is
/// clamped to [eps, 1 - eps] before atanh in tanh mode.
NodeId map_input(Graph& graph, const Tensor& x0, NodeId delta, Mapping mode,
                 double eps = kDefaultMapEpsilon);
Tensor map_input(const Tensor& x0, const Tensor& delta, Mapping mode, double eps = kDefaultMapEpsilon);

/// L_MSE: ||x' - x0||_2^2 (sum of squares) or max |x' - x0|.
NodeId imperceptibility_loss(Graph& graph, NodeId x0, NodeId perturbed, Norm norm);

// Gate-level terms. `lambda` is aligned with `readouts`.

/// L_C = -sum_i lambda_i * min(G_i, tau)
NodeId complexity_loss(Graph& graph, std::span<const GateReadout> readouts, double tau,
                       std::span<const double> lambda);
/// L_P = -sum_i lambda_i * min(G_i, tau)^alpha, alpha >= 1
NodeId power_loss(Graph& graph, std::span<const GateReadout> readouts, double tau, std::span<const double> lambda,
                  double alpha);
/// L_F = -sum_i lambda_i * max(G_i, tau)
NodeId finished_loss(Graph& graph, std::span<const GateReadout> readouts, double tau,
                     std::span<const double> lambda);
/// -sum_i lambda_i * (G_i - tau), the gate part of the relaxed objective.
NodeId relaxed_gate_term(Graph& graph, std::span<const GateReadout> readouts, double tau,
                         std::span<const double> lambda);
/// gamma * L_MSE - sum_i lambda_i * (G_i - tau)
NodeId relaxed_loss(Graph& graph, NodeId imperceptibility, std::span<const GateReadout> readouts, double gamma,
                    double tau, std::span<const double> lambda);

/// Softmax cross-entropy against `label`.
NodeId classification_loss(Graph& graph, NodeId logits, std::size_t label);

}  // namespace gradmdm
