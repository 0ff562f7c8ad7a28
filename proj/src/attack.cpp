#include "gradmdm/attack.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "gradmdm/parallel.hpp"

namespace gradmdm {

Method parse_method(const std::string& s) {
  if (s == "relaxed") return Method::relaxed;
  if (s == "baseline") return Method::baseline;
  if (s == "pl" || s == "power-only") return Method::power_only;
  if (s == "cgm" || s == "cgm-only") return Method::cgm_only;
  if (s == "gradmdm") return Method::gradmdm;
  if (s == "joint-pf") return Method::joint_pf;
  throw std::invalid_argument("unknown method '" + s + "' (expected relaxed|baseline|pl|cgm|gradmdm|joint-pf)");
}

const char* method_name(Method m) {
  switch (m) {
    case Method::relaxed: return "relaxed";
    case Method::baseline: return "baseline";
    case Method::power_only: return "pl";
    case Method::cgm_only: return "cgm";
    case Method::gradmdm: return "gradmdm";
    case Method::joint_pf: return "joint-pf";
  }
  return "?";
}

void AttackConfig::validate() const {
  auto require = [](bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
  };
  require(std::isfinite(gamma) && gamma >= 0.0, "gamma must be finite and >= 0");
  require(std::isfinite(alpha) && alpha >= 1.0, "alpha must be finite and >= 1");
  require(tau > 0.0 && tau < 1.0, "tau must lie in (0, 1)");
  require(iterations >= 1, "iterations must be >= 1");
  require(warmup_frac >= 0.0 && warmup_frac <= 1.0, "warmup fraction must lie in [0, 1]");
  require(std::isfinite(class_loss_weight) && class_loss_weight >= 0.0, "class-loss weight must be >= 0");
  require(optimizer.step_size > 0.0, "optimizer step size must be > 0");
  require(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0, "beta1 must lie in [0, 1)");
  require(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0, "beta2 must lie in [0, 1)");
  require(optimizer.epsilon > 0.0, "optimizer epsilon must be > 0");
  require(eps_finished >= 0.0, "eps_finished must be >= 0");
  require(eps_map > 0.0 && eps_map < 0.5, "eps_map must lie in (0, 0.5)");
}

std::size_t AttackConfig::warmup_steps() const {
  if (method == Method::relaxed || method == Method::baseline) return 0;
  // Guard against 0.2 * 100 landing a hair above 20.
  const double w = warmup_frac * static_cast<double>(iterations);
  const auto steps = static_cast<std::size_t>(std::ceil(w - 1e-9));
  return std::min(steps, iterations);
}

Method AttackConfig::method_at(std::size_t t) const { return t < warmup_steps() ? Method::baseline : method; }

double StepAnalysis::complexity_term(Method m) const {
  switch (m) {
    case Method::relaxed: return relaxed_term;
    case Method::baseline:
    case Method::cgm_only: return l_c;
    case Method::power_only:
    case Method::gradmdm: return l_p;
    case Method::joint_pf: return l_p + l_f;
  }
  return l_c;
}

StepAnalysis analyze_step(const DynamicNet& net, const Tensor& x0, const Tensor& delta, const AttackConfig& config,
                          std::optional<std::size_t> label) {
  if (config.use_class_loss && config.class_loss_weight > 0.0 && !label) {
    throw std::invalid_argument("classification loss enabled but no label supplied");
  }
  Graph g;
  const NodeId d = g.variable(delta);
  const NodeId perturbed = map_input(g, x0, d, config.mapping, config.eps_map);
  const GatedForward fwd = forward_with_gates(net, g, perturbed);
  const std::vector<double> lambda = lambda_weights(net);

  const NodeId imp = imperceptibility_loss(g, g.constant(x0), perturbed, config.norm);
  NodeId fidelity = g.scale(imp, config.gamma);
  if (config.use_class_loss && config.class_loss_weight > 0.0) {
    fidelity = g.add(fidelity, g.scale(classification_loss(g, fwd.logits, *label), config.class_loss_weight));
  }
  const NodeId lc = complexity_loss(g, fwd.readouts, config.tau, lambda);
  const NodeId lp = power_loss(g, fwd.readouts, config.tau, lambda, config.alpha);
  const NodeId lf = finished_loss(g, fwd.readouts, config.tau, lambda);
  const NodeId rt = relaxed_gate_term(g, fwd.readouts, config.tau, lambda);

  StepAnalysis a;
  for (const auto& r : fwd.readouts) {
    a.gates.push_back(r.value);
    if (r.activated) ++a.activated;
  }
  a.used_flops = fwd.flops.used;
  a.l_mse = g.value(imp)[0];
  a.l_c = g.value(lc)[0];
  a.l_p = g.value(lp)[0];
  a.l_f = g.value(lf)[0];
  a.relaxed_term = g.value(rt)[0];

  auto gradient = [&](NodeId root) {
    g.backward(root);
    return g.grad(d);
  };
  a.grad_fidelity = gradient(fidelity);
  a.grad_c = gradient(lc);
  a.grad_p = gradient(lp);
  a.grad_f = gradient(lf);
  a.grad_relaxed = gradient(rt);
  return a;
}

namespace {

Tensor sum_of(std::initializer_list<const Tensor*> parts) {
  Tensor out = Tensor::zeros_like(**parts.begin());
  for (const Tensor* p : parts)
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += (*p)[i];
  return out;
}

}  // namespace

UpdateDirection update_direction(const StepAnalysis& a, Method method, const AttackConfig& config) {
  const bool power = method == Method::power_only || method == Method::gradmdm || method == Method::joint_pf;
  const Tensor& gc = power ? a.grad_p : a.grad_c;
  UpdateDirection u;
  u.theta_deg = angle_degrees(gc, a.grad_f);
  switch (method) {
    case Method::relaxed:
      u.direction = sum_of({&a.grad_fidelity, &a.grad_relaxed});
      break;
    case Method::baseline:
    case Method::power_only:
      u.direction = sum_of({&a.grad_fidelity, &gc});
      break;
    case Method::joint_pf:
      u.direction = sum_of({&a.grad_fidelity, &gc, &a.grad_f});
      break;
    case Method::cgm_only:
    case Method::gradmdm: {
      MaskResult m = mask_gradient(gc, a.grad_f, config.eps_finished);
      u.masked = m.masked;
      u.direction = sum_of({&m.rectified, &a.grad_fidelity});
      break;
    }
  }
  return u;
}

TraceRow attack_step(const DynamicNet& net, const Tensor& x0, AttackState& state, Method method,
                     const AttackConfig& config, std::size_t iteration, std::optional<std::size_t> label) {
  if (!state.current) state.current = analyze_step(net, x0, state.delta, config, label);
  const UpdateDirection u = update_direction(*state.current, method, config);
  state.optimizer.step(state.delta, u.direction);
  state.current = analyze_step(net, x0, state.delta, config, label);

  const StepAnalysis& a = *state.current;
  TraceRow row;
  row.iter = iteration;
  row.method = method;
  row.l_mse = a.l_mse;
  row.complexity_term = a.complexity_term(method);
  row.gates = a.gates;
  row.activated = a.activated;
  row.used_flops = a.used_flops;
  row.masked = u.masked;
  row.theta_deg = u.theta_deg;
  return row;
}

AttackResult run_attack(const DynamicNet& net_in, const Tensor& x0, const AttackConfig& config,
                        std::optional<std::size_t> label) {
  config.validate();
  if (x0.shape() != net_in.input_shape) {
    throw ShapeError("run_attack: input " + shape_string(x0.shape()) + " vs net " + shape_string(net_in.input_shape));
  }
  for (double v : x0.data())
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("run_attack: input pixels must lie in [0, 1]");
  const bool wants_label = config.use_class_loss && config.class_loss_weight > 0.0;
  if (wants_label && !label) throw std::invalid_argument("run_attack: classification loss needs a label");
  if (!wants_label) label.reset();

  // Gating follows the configured threshold; weights are shared untouched.
  const DynamicNet* net = &net_in;
  DynamicNet retuned;
  if (config.tau != net_in.tau) {
    retuned = net_in;
    retuned.tau = config.tau;
    net = &retuned;
  }

  AttackResult result;
  const FlopsReport clean = inference_flops(*net, x0);
  result.clean_flops = clean.used;
  result.full_flops = clean.full;
  for (const auto& [on, _] : clean.per_gate)
    if (on) ++result.clean_activated;

  AttackState state(x0, config.optimizer);
  result.trace.reserve(config.iterations);
  for (std::size_t t = 0; t < config.iterations; ++t) {
    result.trace.push_back(attack_step(*net, x0, state, config.method_at(t), config, t, label));
  }

  result.delta = state.delta;
  result.adversarial = map_input(x0, state.delta, config.mapping, config.eps_map);
  result.attacked_flops = result.trace.back().used_flops;
  result.attacked_activated = result.trace.back().activated;
  result.mse_255 = mse_255(x0, result.adversarial);
  result.psnr_db = psnr(result.mse_255);
  result.arp = arp(result.clean_flops, result.attacked_flops, result.full_flops);
  return result;
}

std::vector<AttackResult> run_attacks(const DynamicNet& net, std::span<const Tensor> inputs,
                                      std::span<const std::size_t> labels, const AttackConfig& config,
                                      std::size_t jobs) {
  if (!labels.empty() && labels.size() != inputs.size()) {
    throw std::invalid_argument("run_attacks: labels not aligned with inputs");
  }
  config.validate();
  std::vector<AttackResult> out(inputs.size());
  parallel_for(inputs.size(), jobs, [&](std::size_t i) {
    std::optional<std::size_t> label;
    if (!labels.empty()) label = labels[i];
    out[i] = run_attack(net, inputs[i], config, label);
  });
  return out;
}

std::vector<std::size_t> gate_flip_counts(const std::vector<TraceRow>& trace, double tau) {
  if (trace.empty()) return {};
  std::vector<std::size_t> flips(trace.front().gates.size(), 0);
  for (std::size_t t = 1; t < trace.size(); ++t) {
    for (std::size_t i = 0; i < flips.size(); ++i) {
      if ((trace[t].gates[i] >= tau) != (trace[t - 1].gates[i] >= tau)) ++flips[i];
    }
  }
  return flips;
}

}  // namespace gradmdm
