#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>

#include "gradmdm/dataset.hpp"
#include "gradmdm/dynamic_net.hpp"
#include "gradmdm/optimizer.hpp"

namespace gradmdm {

struct TrainConfig {
  ArchSpec arch;
  std::size_t epochs = 3;
  std::size_t batch = 16;
  double step_size = 0.01;
  double rho = 0.05;        // weight of mean gate value in the loss
  double holdout = 0.25;
  std::size_t max_attempts = 5;
  double max_flops_ratio = 0.85;  // held-out mean clean FLOPs / full FLOPs
  std::size_t min_patterns = 2;

  void validate() const;
};

struct TrainResult {
  DynamicNet net;
  double clean_flops_ratio = 0.0;   // held-out mean
  std::size_t distinct_patterns = 0;
  double holdout_accuracy = 0.0;
  std::size_t attempts = 0;
  bool diagnostic = false;          // rho == 0, gating contract not enforced
};

class DegenerateGatingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Trains with cross-entropy + rho * mean(G) using straight-through gates.
/// With rho > 0 the held-out split must reach the FLOPs and pattern-diversity
/// contract; otherwise training restarts from a fresh sub-seed, and after
/// max_attempts a DegenerateGatingError is thrown.
TrainResult train_toy_net(const SynthDataset& data, const TrainConfig& config, std::uint64_t seed);

struct GatingStats {
  double mean_flops_ratio = 0.0;
  std::size_t distinct_patterns = 0;
  double accuracy = 0.0;
};

GatingStats gating_stats(const DynamicNet& net, const SynthDataset& data);

}  // namespace gradmdm
