#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gradmdm/cgm.hpp"
#include "gradmdm/dynamic_net.hpp"
#include "gradmdm/losses.hpp"
#include "gradmdm/metrics.hpp"
#include "gradmdm/optimizer.hpp"

namespace gradmdm {

enum class Method {
  relaxed,     // gamma L_MSE - sum lambda (G - tau), all gates
  baseline,    // gamma L_MSE + L_C
  power_only,  // gamma L_MSE + L_P
  cgm_only,    // mask(grad L_C, grad L_F) + grad gamma L_MSE
  gradmdm,     // mask(grad L_P, grad L_F) + grad gamma L_MSE
  joint_pf,    // gamma L_MSE + L_P + L_F
};

Method parse_method(const std::string& s);
const char* method_name(Method m);

struct AttackConfig {
  double gamma = 100.0;
  double alpha = 4.0;
  double tau = 0.5;
  std::size_t iterations = 100;
  double warmup_frac = 0.2;
  Method method = Method::gradmdm;
  Mapping mapping = Mapping::tanh;
  Norm norm = Norm::l2;
  bool use_class_loss = false;
  double class_loss_weight = 0.0;
  AdamConfig optimizer{};
  double eps_finished = kDefaultFinishedEpsilon;
  double eps_map = kDefaultMapEpsilon;

  /// Throws std::invalid_argument naming the first out-of-range field.
  void validate() const;
  /// ceil(warmup_frac * iterations); zero for methods that warm up as themselves.
  std::size_t warmup_steps() const;
  /// Method used at iteration t.
  Method method_at(std::size_t t) const;
};

struct TraceRow {
  std::size_t iter = 0;
  Method method = Method::baseline;  // update rule used this iteration
  double l_mse = 0.0;                // imperceptibility term, unweighted
  double complexity_term = 0.0;      // gate term of `method`
  std::vector<double> gates;
  std::size_t activated = 0;
  double used_flops = 0.0;
  bool masked = false;
  double theta_deg = 0.0;            // angle(g_C, g_F) before the update; NaN when g_F vanishes
};

struct AttackResult {
  Tensor delta;
  Tensor adversarial;
  double clean_flops = 0.0;
  double attacked_flops = 0.0;
  double full_flops = 0.0;
  std::size_t clean_activated = 0;
  std::size_t attacked_activated = 0;
  double mse_255 = 0.0;
  double psnr_db = 0.0;
  std::optional<double> arp;
  std::vector<TraceRow> trace;  // row t holds the state after update t
};

/// Loss values, gate readouts and every gradient (w.r.t. the perturbation)
/// that any update rule needs, evaluated at one perturbation.
struct StepAnalysis {
  std::vector<double> gates;
  std::size_t activated = 0;
  double used_flops = 0.0;
  double l_mse = 0.0;
  double l_c = 0.0;
  double l_p = 0.0;
  double l_f = 0.0;
  double relaxed_term = 0.0;
  Tensor grad_fidelity;  // gamma L_MSE (+ weighted classification loss)
  Tensor grad_c;
  Tensor grad_p;
  Tensor grad_f;
  Tensor grad_relaxed;   // gate term of the relaxed objective

  double complexity_term(Method m) const;
};

StepAnalysis analyze_step(const DynamicNet& net, const Tensor& x0, const Tensor& delta, const AttackConfig& config,
                          std::optional<std::size_t> label = std::nullopt);

struct UpdateDirection {
  Tensor direction;
  bool masked = false;
  double theta_deg = 0.0;
};

/// Descent direction of `method` at the analysed point.
UpdateDirection update_direction(const StepAnalysis& a, Method method, const AttackConfig& config);

struct AttackState {
  Tensor delta;
  Adam optimizer;
  std::optional<StepAnalysis> current;  // analysis at `delta`, reused by the next step

  AttackState(const Tensor& x0, const AdamConfig& opt) : delta(Tensor::zeros_like(x0)), optimizer(opt) {}
};

/// One update of `state.delta` using `method`; returns the trace row for the
/// resulting perturbation.
TraceRow attack_step(const DynamicNet& net, const Tensor& x0, AttackState& state, Method method,
                     const AttackConfig& config, std::size_t iteration,
                     std::optional<std::size_t> label = std::nullopt);

/// Full optimisation from delta = 0. The label is read only when
/// config.use_class_loss is set, and is then required.
AttackResult run_attack(const DynamicNet& net, const Tensor& x0, const AttackConfig& config,
                        std::optional<std::size_t> label = std::nullopt);

/// Attacks every input on `jobs` worker threads; results keep input order.
std::vector<AttackResult> run_attacks(const DynamicNet& net, std::span<const Tensor> inputs,
                                      std::span<const std::size_t> labels, const AttackConfig& config,
                                      std::size_t jobs = 1);

/// Number of activated/deactivated switches per gate across the trace.
std::vector<std::size_t> gate_flip_counts(const std::vector<TraceRow>& trace, double tau);

}  // namespace gradmdm
