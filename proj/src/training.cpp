#include "gradmdm/training.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <set>
#include <string>

#include "gradmdm/seed.hpp"

namespace gradmdm {

void TrainConfig::validate() const {
  if (epochs == 0) throw std::invalid_argument("epochs must be positive");
  if (batch == 0) throw std::invalid_argument("batch must be positive");
  if (!(step_size > 0.0)) throw std::invalid_argument("step size must be positive");
  if (!(rho >= 0.0)) throw std::invalid_argument("rho must be non-negative");
  if (!(holdout > 0.0 && holdout < 1.0)) throw std::invalid_argument("holdout must lie in (0, 1)");
  if (max_attempts == 0) throw std::invalid_argument("max_attempts must be positive");
  if (arch.blocks == 0) throw std::invalid_argument("need at least one gated block");
  if (!(arch.tau > 0.0 && arch.tau < 1.0)) throw std::invalid_argument("tau must lie in (0, 1)");
}

GatingStats gating_stats(const DynamicNet& net, const SynthDataset& data) {
  GatingStats s;
  if (data.size() == 0) return s;
  std::set<std::vector<bool>> patterns;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    Graph g;
    const auto fwd = forward_with_gates(net, g, data.inputs[i]);
    s.mean_flops_ratio += fwd.flops.used / fwd.flops.full;
    std::vector<bool> p;
    for (const auto& r : fwd.readouts) p.push_back(r.activated);
    patterns.insert(std::move(p));
    const Tensor& z = g.value(fwd.logits);
    const auto arg = static_cast<std::size_t>(std::max_element(z.data().begin(), z.data().end()) - z.data().begin());
    if (arg == data.labels[i]) ++correct;
  }
  s.mean_flops_ratio /= static_cast<double>(data.size());
  s.distinct_patterns = patterns.size();
  s.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  return s;
}

namespace {

DynamicNet train_once(const SynthDataset& train, const TrainConfig& config, std::uint64_t seed) {
  ArchSpec arch = config.arch;
  arch.classes = train.classes;
  DynamicNet net = make_net(arch, seed);
  auto params = net.named_parameters();

  AdamConfig adam_cfg;
  adam_cfg.step_size = config.step_size;
  std::vector<Adam> opt(params.size(), Adam(adam_cfg));
  std::vector<Tensor> acc;
  for (auto& [_, t] : params) acc.push_back(Tensor::zeros_like(*t));

  std::mt19937_64 rng(seed ^ 0x5eed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += config.batch) {
      const std::size_t stop = std::min(order.size(), start + config.batch);
      for (auto& a : acc) std::fill(a.data().begin(), a.data().end(), 0.0);
      for (std::size_t k = start; k < stop; ++k) {
        const std::size_t i = order[k];
        Graph g;
        const auto fwd = forward_with_gates(net, g, g.constant(train.inputs[i]), GateMode::straight_through, true);
        std::vector<NodeId> gate_nodes;
        for (const auto& r : fwd.readouts) gate_nodes.push_back(r.node);
        NodeId loss = g.softmax_xent(fwd.logits, train.labels[i]);
        if (config.rho > 0.0) loss = g.add(loss, g.scale(g.mean(g.concat(gate_nodes)), config.rho));
        g.backward(loss);
        for (std::size_t p = 0; p < params.size(); ++p) {
          const Tensor& grad = g.grad(fwd.param_nodes[p]);
          for (std::size_t e = 0; e < grad.size(); ++e) acc[p][e] += grad[e];
        }
      }
      const double inv = 1.0 / static_cast<double>(stop - start);
      for (std::size_t p = 0; p < params.size(); ++p) {
        for (auto& v : acc[p].data()) v *= inv;
        opt[p].step(*params[p].second, acc[p]);
      }
    }
  }
  return net;
}

}  // namespace

TrainResult train_toy_net(const SynthDataset& data, const TrainConfig& config, std::uint64_t seed) {
  if (data.size() == 0) throw std::invalid_argument("train_toy_net: empty dataset");
  config.validate();
  auto [train, holdout] = split_holdout(data, config.holdout);
  if (train.size() == 0 || holdout.size() == 0) throw std::invalid_argument("train_toy_net: dataset too small to split");

  const bool diagnostic = config.rho == 0.0;
  std::string last;
  for (std::size_t attempt = 0; attempt < config.max_attempts; ++attempt) {
    const std::uint64_t sub = derive_seed(seed, Stream::train_retry, attempt);
    DynamicNet net = train_once(train, config, sub);
    const GatingStats stats = gating_stats(net, holdout);
    TrainResult r{std::move(net), stats.mean_flops_ratio, stats.distinct_patterns, stats.accuracy, attempt + 1,
                  diagnostic};
    if (diagnostic) return r;
    if (stats.mean_flops_ratio <= config.max_flops_ratio && stats.distinct_patterns >= config.min_patterns) return r;
    last = "flops ratio " + std::to_string(stats.mean_flops_ratio) + ", " +
           std::to_string(stats.distinct_patterns) + " activation pattern(s)";
  }
  throw DegenerateGatingError("degenerate gating after " + std::to_string(config.max_attempts) +
                              " attempt(s): " + last);
}

}  // namespace gradmdm
