#include "gradmdm/cgm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace gradmdm {

Tensor project(const Tensor& complexity, const Tensor& finished) {
  if (complexity.shape() != finished.shape()) {
    throw ShapeError("project: " + shape_string(complexity.shape()) + " vs " + shape_string(finished.shape()));
  }
  const double ff = dot(finished, finished);
  if (ff == 0.0) throw std::domain_error("project: finished gradient is zero");
  const double coef = dot(complexity, finished) / ff;
  Tensor out(finished.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = coef * finished[i];
  return out;
}

Tensor reject(const Tensor& complexity, const Tensor& finished) {
  const Tensor proj = project(complexity, finished);
  Tensor out(complexity.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = complexity[i] - proj[i];
  return out;
}

MaskResult mask_gradient(const Tensor& complexity, const Tensor& finished, double eps_finished) {
  if (complexity.shape() != finished.shape()) {
    throw ShapeError("mask_gradient: " + shape_string(complexity.shape()) + " vs " + shape_string(finished.shape()));
  }
  const double fnorm = norm2(finished);
  if (fnorm <= eps_finished) return {complexity, false};
  const double d = dot(complexity, finished);
  if (d >= -kOrthogonalSlack * norm2(complexity) * fnorm) return {complexity, false};
  return {reject(complexity, finished), true};
}

double angle_degrees(const Tensor& a, const Tensor& b) {
  const double na = norm2(a), nb = norm2(b);
  if (na == 0.0 || nb == 0.0) return std::numeric_limits<double>::quiet_NaN();
  const double c = std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
  return std::acos(c) * 180.0 / std::numbers::pi;
}

}  // namespace gradmdm
