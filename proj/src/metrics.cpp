#include "gradmdm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace gradmdm {

double mse_255(const Tensor& original, const Tensor& perturbed) {
  if (original.shape() != perturbed.shape()) {
    throw ShapeError("mse_255: " + shape_string(original.shape()) + " vs " + shape_string(perturbed.shape()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < original.size(); ++i) {
    const double d = kMaxPixel * perturbed[i] - kMaxPixel * original[i];
    s += d * d;
  }
  return s / static_cast<double>(original.size());
}

double psnr(double mse) {
  if (mse < 0.0) throw std::invalid_argument("psnr: negative mse");
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(kMaxPixel * kMaxPixel / mse);
}

std::optional<double> arp(double clean, double attacked, double full) {
  if (clean > full) throw std::invalid_argument("arp: clean FLOPs exceed full FLOPs");
  if (attacked > full) throw std::invalid_argument("arp: attacked FLOPs exceed full FLOPs (accounting bug)");
  if (full == clean) return std::nullopt;
  const double r = 100.0 * (attacked - clean) / (full - clean);
  return std::clamp(r, 0.0, 100.0);
}

double aggregate_arp(std::span<const FlopsTriple> samples) {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& t : samples) {
    if (auto r = arp(t.clean, t.attacked, t.full)) {
      s += *r;
      ++n;
    }
  }
  return n == 0 ? 0.0 : s / static_cast<double>(n);
}

}  // namespace gradmdm
