#include "gradmdm/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace gradmdm {

namespace {
constexpr std::size_t kSide = 8;
constexpr double kMeanScale = 0.8;
constexpr double kNoise = 0.3;
}  // namespace

SynthDataset synth_dataset(std::uint64_t seed, std::size_t n, std::size_t classes) {
  if (classes < 2) throw std::invalid_argument("synth_dataset: need at least two classes");
  if (n < classes) throw std::invalid_argument("synth_dataset: need n >= classes");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> strength(0.15, 1.0);

  const std::size_t dim = kSide * kSide;
  std::vector<std::vector<double>> centers(classes, std::vector<double>(dim));
  for (auto& c : centers)
    for (auto& v : c) v = kMeanScale * normal(rng);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  SynthDataset out;
  out.seed = seed;
  out.classes = classes;
  out.inputs.reserve(n);
  out.labels.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t label = order[i] % classes;
    const double s = strength(rng);
    Tensor x({1, kSide, kSide});
    for (std::size_t p = 0; p < dim; ++p) {
      const double z = s * centers[label][p] + kNoise * normal(rng);
      x[p] = 1.0 / (1.0 + std::exp(-z));
    }
    out.inputs.push_back(std::move(x));
    out.labels.push_back(label);
  }
  return out;
}

std::pair<SynthDataset, SynthDataset> split_holdout(const SynthDataset& data, double holdout) {
  if (!(holdout >= 0.0 && holdout < 1.0)) throw std::invalid_argument("holdout fraction must lie in [0, 1)");
  const auto keep = data.size() - static_cast<std::size_t>(std::floor(holdout * static_cast<double>(data.size())));
  SynthDataset a, b;
  a.seed = b.seed = data.seed;
  a.classes = b.classes = data.classes;
  for (std::size_t i = 0; i < data.size(); ++i) {
    SynthDataset& dst = i < keep ? a : b;
    dst.inputs.push_back(data.inputs[i]);
    dst.labels.push_back(data.labels[i]);
  }
  return {std::move(a), std::move(b)};
}

}  // namespace gradmdm
