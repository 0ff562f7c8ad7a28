#pragma once

// Test-side reference computations. Nothing here calls a backward pass.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "gradmdm/autodiff.hpp"
#include "gradmdm/tensor.hpp"

namespace oracle {

using gradmdm::Graph;
using gradmdm::NodeId;
using gradmdm::Tensor;

using Builder = std::function<NodeId(Graph&, NodeId)>;

/// Forward value of a scalar graph built on a constant input.
inline double evaluate(const Builder& build, const Tensor& x) {
  Graph g;
  return g.value(build(g, g.constant(x)))[0];
}

/// Central differences with step h in every coordinate.
inline Tensor central_difference(const Builder& build, const Tensor& x, double h = 1e-6) {
  Tensor grad = Tensor::zeros_like(x);
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double up = evaluate(build, probe);
    probe[i] = x[i] - h;
    const double down = evaluate(build, probe);
    probe[i] = x[i];
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

/// Gradient recorded by the tape.
inline Tensor tape_gradient(const Builder& build, const Tensor& x) {
  Graph g;
  const NodeId v = g.variable(x);
  g.backward(build(g, v));
  return g.grad(v);
}

/// max |a - b| / max(max |a|, max |b|, floor)
inline double relative_error(const Tensor& a, const Tensor& b, double floor = 1e-8) {
  double diff = 0.0, scale = floor;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - b[i]));
    scale = std::max({scale, std::abs(a[i]), std::abs(b[i])});
  }
  return diff / scale;
}

inline Tensor uniform(std::mt19937_64& rng, gradmdm::Shape shape, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = u(rng);
  return t;
}

inline Tensor normal(std::mt19937_64& rng, gradmdm::Shape shape) {
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = n(rng);
  return t;
}

/// Moves entries closer than `gap` to `kink` out to distance `gap`.
inline void keep_away(Tensor& t, double kink, double gap) {
  for (auto& v : t.data())
    if (std::abs(v - kink) < gap) v = kink + (v < kink ? -gap : gap);
}

inline double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(const Tensor& a) { return std::sqrt(oracle::dot(a, a)); }

}  // namespace oracle
