#pragma once

#include "gradmdm/tensor.hpp"

namespace gradmdm {

constexpr double kDefaultFinishedEpsilon = 1e-12;

// Relative slack on <g_C, g_F> below which the two are treated as
// orthogonal rather than conflicting. Keeps mask_gradient idempotent: a
// rejected vector has a dot product with g_F at rounding level, and a second
// pass must leave it untouched.
constexpr double kOrthogonalSlack = 1e-12;

/// Component of `complexity` along `finished`. Throws std::domain_error if
/// `finished` is the zero vector.
Tensor project(const Tensor& complexity, const Tensor& finished);

/// complexity - project(complexity, finished)
Tensor reject(const Tensor& complexity, const Tensor& finished);

struct MaskResult {
  Tensor rectified;
  bool masked = false;  // the rejection branch ran
};

/// Complexity Gradient Masking. Keeps g_C unless it opposes g_F, in which
/// case only the part orthogonal to g_F survives. With ||g_F|| <= eps_finished
/// there is nothing to protect and g_C is returned unchanged.
MaskResult mask_gradient(const Tensor& complexity, const Tensor& finished,
                         double eps_finished = kDefaultFinishedEpsilon);

/// Angle between two vectors in degrees; NaN if either is zero.
double angle_degrees(const Tensor& a, const Tensor& b);

}  // namespace gradmdm
