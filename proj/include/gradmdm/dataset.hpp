#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "gradmdm/tensor.hpp"

namespace gradmdm {

struct SynthDataset {
  std::vector<Tensor> inputs;  // each 1x8x8 in [0, 1]
  std::vector<std::size_t> labels;
  std::uint64_t seed = 0;
  std::size_t classes = 0;

  std::size_t size() const { return inputs.size(); }
};

/// Gaussian class blobs squashed into [0,1]^{1x8x8} by a logistic.
/// Each sample carries a random signal strength so some are far easier to
/// classify than others. Labels are balanced. Requires n >= classes >= 2.
SynthDataset synth_dataset(std::uint64_t seed, std::size_t n, std::size_t classes);

/// Splits off the trailing `holdout` fraction; the order is already shuffled.
std::pair<SynthDataset, SynthDataset> split_holdout(const SynthDataset& data, double holdout);

}  // namespace gradmdm
