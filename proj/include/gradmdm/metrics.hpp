#pragma once

#include <optional>
#include <span>

#include "gradmdm/tensor.hpp"

namespace gradmdm {

constexpr double kMaxPixel = 255.0;

/// Mean squared error in 255-scale pixel units, averaged over every element.
double mse_255(const Tensor& original, const Tensor& perturbed);

/// 10 log10(255^2 / mse); +inf when mse is 0.
double psnr(double mse_255);

/// Percentage of the FLOPs saved on the clean input that the attack
/// recovers, clipped to [0, 100]. Empty when the clean input saved nothing.
/// Throws std::invalid_argument when attacked > full or clean > full.
std::optional<double> arp(double clean_flops, double attacked_flops, double full_flops);

struct FlopsTriple {
  double clean = 0.0;
  double attacked = 0.0;
  double full = 0.0;
};

/// Mean recovery over the samples that had savings; 0 if none did.
double aggregate_arp(std::span<const FlopsTriple> samples);

struct SampleMetrics {
  double clean_flops = 0.0;
  double attacked_flops = 0.0;
  double full_flops = 0.0;
  double mse_255 = 0.0;
  double psnr_db = 0.0;
};

}  // namespace gradmdm
