#include "gradmdm/verify.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>

#include "gradmdm/autodiff.hpp"
#include "gradmdm/cgm.hpp"
#include "gradmdm/dynamic_net.hpp"
#include "gradmdm/losses.hpp"
#include "gradmdm/metrics.hpp"
#include "gradmdm/seed.hpp"

namespace gradmdm {

GeometryOps GeometryOps::library() {
  return {[](const Tensor& a, const Tensor& b) { return gradmdm::project(a, b); },
          [](const Tensor& a, const Tensor& b) { return gradmdm::reject(a, b); }};
}

namespace {

constexpr std::size_t kMaxListedFailures = 5;
constexpr double kStep = 1e-6;
constexpr double kGradTol = 1e-5;

void record(SuiteReport& r, bool ok, const std::string& what) {
  if (ok) {
    ++r.passed;
    return;
  }
  ++r.failed;
  if (r.failures.size() < kMaxListedFailures) r.failures.push_back(what);
}

using Builder = std::function<NodeId(Graph&, NodeId)>;

// Relative error between the tape gradient and central differences, with a
// floor on the denominator so vanishing gradients compare absolutely.
double gradient_error(const Tensor& x, const Builder& f) {
  Graph g;
  const NodeId v = g.variable(x);
  g.backward(f(g, v));
  const Tensor analytic = g.grad(v);

  auto eval = [&](const Tensor& at) {
    Graph h;
    return h.value(f(h, h.constant(at)))[0];
  };
  double diff = 0.0, scale = 0.0;
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + kStep;
    const double up = eval(probe);
    probe[i] = x[i] - kStep;
    const double down = eval(probe);
    probe[i] = x[i];
    const double numeric = (up - down) / (2.0 * kStep);
    diff = std::max(diff, std::abs(numeric - analytic[i]));
    scale = std::max({scale, std::abs(numeric), std::abs(analytic[i])});
  }
  return diff / std::max(scale, 1e-3);
}

Tensor random_tensor(std::mt19937_64& rng, Shape shape, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = u(rng);
  return t;
}

// Pushes entries at least `gap` away from `kink`.
void avoid(Tensor& t, double kink, double gap) {
  for (auto& v : t.data())
    if (std::abs(v - kink) < gap) v = kink + (v < kink ? -gap : gap);
}

NodeId weighted_sum(Graph& g, NodeId y, const Tensor& w) { return g.sum(g.hadamard(y, g.constant(w))); }

// Splits a gate vector node into per-gate scalar readouts.
std::vector<GateReadout> readouts_of(Graph& g, NodeId gates, const Tensor& values, double tau) {
  std::vector<GateReadout> out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    Tensor pick({values.size()}, 0.0);
    pick[i] = 1.0;
    GateReadout r;
    r.index = i;
    r.node = g.reshape(g.sum(g.hadamard(gates, g.constant(pick))), {1});
    r.value = values[i];
    r.activated = values[i] >= tau;
    out.push_back(r);
  }
  return out;
}

}  // namespace

SuiteReport verify_gradients(const VerifyOptions& opt) {
  SuiteReport r;
  r.name = "gradients";
  std::mt19937_64 rng(derive_seed(opt.seed, Stream::sample, 1));

  struct Case {
    const char* name;
    Shape shape;
    double lo, hi, kink, gap;
    std::function<NodeId(Graph&, NodeId, std::mt19937_64&)> body;
  };
  const Shape v6{6};
  const std::vector<Case> cases = {
      {"add", v6, -1, 1, 0, 0, [](Graph& g, NodeId x, auto& e) { return g.add(x, g.constant(random_tensor(e, {6}, -1, 1))); }},
      {"add-broadcast", v6, -1, 1, 0, 0, [](Graph& g, NodeId x, auto& e) { return g.add(g.constant(random_tensor(e, {1}, -1, 1)), x); }},
      {"sub", v6, -1, 1, 0, 0, [](Graph& g, NodeId x, auto& e) { return g.sub(g.constant(random_tensor(e, {6}, -1, 1)), x); }},
      {"hadamard", v6, -1, 1, 0, 0, [](Graph& g, NodeId x, auto&) { return g.hadamard(x, x); }},
      {"matmul-left", {3, 4}, -1, 1, 0, 0, [](Graph& g, NodeId x, auto& e) { return g.matmul(x, g.constant(random_tensor(e, {4, 2}, -1, 1))); }},
      {"matmul-right", {4, 2}, -1, 1, 0, 0, [](Graph& g, NodeId x, auto& e) { return g.matmul(g.constant(random_tensor(e, {3, 4}, -1, 1)), x); }},
      {"scale", v6, -1, 1, 0, 0, [](Graph& g, NodeId x, auto&) { return g.scale(x, -2.5); }},
      {"sigmoid", v6, -3, 3, 0, 0, [](Graph& g, NodeId x, auto&) { return g.sigmoid(x); }},
      {"tanh", v6, -2, 2, 0, 0, [](Graph& g, NodeId x, auto&) { return g.tanh(x); }},
      {"relu", v6, -1, 1, 0.0, 1e-3, [](Graph& g, NodeId x, auto&) { return g.relu(x); }},
      {"pow", v6, 0.1, 1, 0, 0, [](Graph& g, NodeId x, auto&) { return g.pow_const(x, 3.5); }},
      {"clip-min", v6, -1, 1, 0.2, 1e-3, [](Graph& g, NodeId x, auto&) { return g.clip_min_const(x, 0.2); }},
      {"clip-max", v6, -1, 1, 0.2, 1e-3, [](Graph& g, NodeId x, auto&) { return g.clip_max_const(x, 0.2); }},
      {"sum", v6, -1, 1, 0, 0, [](Graph& g, NodeId x, auto&) { return g.sum(x); }},
      {"mean", v6, -1, 1, 0, 0, [](Graph& g, NodeId x, auto&) { return g.mean(x); }},
      {"sq-l2", v6, -1, 1, 0, 0, [](Graph& g, NodeId x, auto&) { return g.sq_l2(x); }},
      {"max-abs", v6, 0.05, 1, 0, 0, [](Graph& g, NodeId x, auto&) { return g.max_abs(x); }},
      {"reshape", {2, 3}, -1, 1, 0, 0, [](Graph& g, NodeId x, auto&) { return g.reshape(x, {6}); }},
      {"concat", {2, 3}, -1, 1, 0, 0, [](Graph& g, NodeId x, auto&) { return g.concat({x, g.sigmoid(x)}); }},
      {"softmax-xent", {4}, -2, 2, 0, 0, [](Graph& g, NodeId x, auto&) { return g.softmax_xent(x, 2); }},
  };

  for (const auto& c : cases) {
    for (std::size_t i = 0; i < opt.instances; ++i) {
      Tensor x = random_tensor(rng, c.shape, c.lo, c.hi);
      if (c.gap > 0) avoid(x, c.kink, c.gap);
      // Same constants for every evaluation of this instance.
      const auto inner_seed = rng();
      Builder f = [&](Graph& g, NodeId v) {
        std::mt19937_64 e(inner_seed);
        const NodeId y = c.body(g, v, e);
        const Tensor& yv = g.value(y);
        if (yv.size() == 1) return g.reshape(y, {1});
        return weighted_sum(g, y, random_tensor(e, yv.shape(), -1, 1));
      };
      const double err = gradient_error(x, f);
      record(r, err <= kGradTol, fmt::format("{} instance {}: relative error {:.3g}", c.name, i, err));
    }
  }

  // Loss gradients with respect to the perturbation, through a toy net.
  ArchSpec spec;
  const DynamicNet net = make_net(spec, derive_seed(opt.seed, Stream::init));
  const auto lambda = lambda_weights(net);
  const double tau = net.tau;
  using LossFn = std::function<NodeId(Graph&, const Tensor&, NodeId, const GatedForward&, NodeId)>;
  const std::vector<std::pair<const char*, LossFn>> losses = {
      {"L_MSE-l2", [](Graph& g, const Tensor& x0, NodeId, const GatedForward&, NodeId p) {
         return imperceptibility_loss(g, g.constant(x0), p, Norm::l2);
       }},
      {"L_MSE-linf", [](Graph& g, const Tensor& x0, NodeId, const GatedForward&, NodeId p) {
         return imperceptibility_loss(g, g.constant(x0), p, Norm::linf);
       }},
      {"L_C", [&](Graph& g, const Tensor&, NodeId, const GatedForward& f, NodeId) {
         return complexity_loss(g, f.readouts, tau, lambda);
       }},
      {"L_P", [&](Graph& g, const Tensor&, NodeId, const GatedForward& f, NodeId) {
         return power_loss(g, f.readouts, tau, lambda, 4.0);
       }},
      {"L_F", [&](Graph& g, const Tensor&, NodeId, const GatedForward& f, NodeId) {
         return finished_loss(g, f.readouts, tau, lambda);
       }},
      {"relaxed", [&](Graph& g, const Tensor& x0, NodeId, const GatedForward& f, NodeId p) {
         return relaxed_loss(g, imperceptibility_loss(g, g.constant(x0), p, Norm::l2), f.readouts, 3.0, tau, lambda);
       }},
      {"classification", [](Graph& g, const Tensor&, NodeId, const GatedForward& f, NodeId) {
         return classification_loss(g, f.logits, 1);
       }},
  };
  for (const auto& [name, loss] : losses) {
    std::size_t done = 0;
    for (std::size_t attempt = 0; done < opt.instances && attempt < 20 * opt.instances; ++attempt) {
      const Tensor x0 = random_tensor(rng, net.input_shape, 0.05, 0.95);
      const Tensor delta = random_tensor(rng, net.input_shape, -0.5, 0.5);
      // Gates near the threshold switch the executed path inside the stencil.
      const Tensor xp = map_input(x0, delta, Mapping::tanh);
      Graph probe;
      const auto fwd = forward_with_gates(net, probe, xp);
      bool near = false;
      for (const auto& rd : fwd.readouts) near = near || std::abs(rd.value - tau) < 1e-3;
      if (near) continue;
      Builder f = [&](Graph& g, NodeId d) {
        const NodeId p = map_input(g, x0, d, Mapping::tanh);
        const GatedForward fw = forward_with_gates(net, g, p);
        return loss(g, x0, d, fw, p);
      };
      const double err = gradient_error(delta, f);
      record(r, err <= kGradTol, fmt::format("{} instance {}: relative error {:.3g}", name, done, err));
      ++done;
    }
    if (done < opt.instances) record(r, false, fmt::format("{}: too few instances away from the threshold", name));
  }

  // Straight-through: hard forward value, identity backward.
  for (std::size_t i = 0; i < opt.instances; ++i) {
    Tensor x = random_tensor(rng, {6}, 0, 1);
    avoid(x, 0.5, 1e-3);
    Graph g;
    const NodeId v = g.variable(x);
    const NodeId s = g.straight_through(v, 0.5);
    g.backward(g.sum(s));
    bool ok = true;
    for (std::size_t k = 0; k < x.size(); ++k) {
      ok = ok && g.value(s)[k] == (x[k] >= 0.5 ? 1.0 : 0.0) && g.grad(v)[k] == 1.0;
    }
    record(r, ok, fmt::format("straight-through instance {}", i));
  }
  return r;
}

SuiteReport verify_geometry(const VerifyOptions& opt) {
  SuiteReport r;
  r.name = "geometry";
  std::mt19937_64 rng(derive_seed(opt.seed, Stream::sample, 2));
  std::normal_distribution<double> n01(0.0, 1.0);
  for (std::size_t dim : {2u, 64u, 192u}) {
    for (std::size_t i = 0; i < opt.pairs; ++i) {
      Tensor gc({dim}), gf({dim});
      for (auto& v : gc.data()) v = n01(rng);
      for (auto& v : gf.data()) v = n01(rng);
      const double ngc = std::sqrt(dot(gc, gc)), ngf = std::sqrt(dot(gf, gf));
      const Tensor p = opt.geometry.project(gc, gf);
      const Tensor o = opt.geometry.reject(gc, gf);

      double worst = 0.0;
      for (std::size_t k = 0; k < dim; ++k) worst = std::max(worst, std::abs(p[k] + o[k] - gc[k]));
      record(r, worst <= 1e-12, fmt::format("decomposition dim {} pair {}: {:.3g}", dim, i, worst));
      record(r, std::abs(dot(o, gf)) <= 1e-9 * ngc * ngf, fmt::format("rejection not orthogonal dim {} pair {}", dim, i));

      const MaskResult m = mask_gradient(gc, gf);
      const double nm = std::sqrt(dot(m.rectified, m.rectified));
      record(r, dot(m.rectified, gf) >= -1e-9 * nm * ngf, fmt::format("mask opposes g_F dim {} pair {}", dim, i));
      const MaskResult twice = mask_gradient(m.rectified, gf);
      record(r, twice.rectified == m.rectified, fmt::format("mask not idempotent dim {} pair {}", dim, i));
      if (dot(gc, gf) < 0.0) {
        double dev = 0.0;
        for (std::size_t k = 0; k < dim; ++k) dev = std::max(dev, std::abs(m.rectified[k] - o[k]));
        record(r, dev <= 1e-12 * std::max(1.0, ngc), fmt::format("conflict branch differs from rejection dim {} pair {}", dim, i));
      }

      const MaskResult zero = mask_gradient(gc, Tensor::zeros_like(gf));
      record(r, zero.rectified == gc && !zero.masked, fmt::format("zero g_F branch dim {} pair {}", dim, i));
    }
  }
  return r;
}

SuiteReport verify_losses(const VerifyOptions& opt) {
  SuiteReport r;
  r.name = "losses";
  std::mt19937_64 rng(derive_seed(opt.seed, Stream::sample, 3));
  constexpr double tau = 0.5;
  for (std::size_t i = 0; i < 10 * opt.instances; ++i) {
    const std::size_t n = 1 + rng() % 12;
    Tensor gates = random_tensor(rng, {n}, 0, 1);
    if (i % 4 == 0) gates[rng() % n] = tau;  // exercise ties
    std::vector<double> costs(n);
    for (auto& c : costs) c = 1.0 + static_cast<double>(rng() % 100);
    const auto lambda = lambda_weights(costs);

    Graph g;
    const NodeId v = g.variable(gates);
    const auto ro = readouts_of(g, v, gates, tau);
    const NodeId lc = complexity_loss(g, ro, tau, lambda);
    const NodeId lp = power_loss(g, ro, tau, lambda, 1.0);
    const NodeId lf = finished_loss(g, ro, tau, lambda);
    g.backward(lc);
    const Tensor gc = g.grad(v);
    g.backward(lp);
    const Tensor gp = g.grad(v);
    g.backward(lf);
    const Tensor gf = g.grad(v);

    record(r, g.value(lc)[0] == g.value(lp)[0] && gc == gp, fmt::format("power(alpha=1) != complexity, case {}", i));
    bool support = true;
    for (std::size_t k = 0; k < n; ++k) {
      if (gates[k] >= tau) support = support && gc[k] == 0.0;
      if (gates[k] <= tau) support = support && gf[k] == 0.0;
      support = support && !(gc[k] != 0.0 && gf[k] != 0.0);
    }
    record(r, support, fmt::format("gradient support violated, case {}", i));
  }
  return r;
}

SuiteReport verify_metrics(const VerifyOptions&) {
  SuiteReport r;
  r.name = "metrics";
  // Reference (MSE, PSNR) pairs, given to 2 and 1 decimals. A pair is
  // consistent when some MSE that rounds to the printed value yields a PSNR
  // that rounds to the printed one.
  struct Pair {
    double mse, db;
  };
  for (const Pair& p : {Pair{0.11, 57.7}, Pair{0.25, 54.1}}) {
    const double hi_db = psnr(p.mse - 0.005), lo_db = psnr(p.mse + 0.005);
    const bool ok = lo_db <= p.db + 0.05 && hi_db >= p.db - 0.05;
    record(r, ok, fmt::format("psnr({}) = {:.4f}, reference {}", p.mse, psnr(p.mse), p.db));
  }
  record(r, std::abs(psnr(0.11) - psnr(0.25) - 3.56) <= 0.1, "psnr spread between reference pairs");
  record(r, psnr(65025.0) == 0.0, "psnr at maximal error");
  record(r, arp(40, 40, 100) == 0.0, "arp at clean");
  record(r, arp(40, 100, 100) == 100.0, "arp at full");
  record(r, arp(40, 70, 100) == 50.0, "arp midway");
  record(r, !arp(100, 100, 100).has_value(), "arp without savings");
  Tensor a({1, 8, 8}, 0.5), b = a;
  b[0] += 1.0 / 255.0;
  record(r, std::abs(mse_255(a, b) - 0.015625) <= 1e-12, "mse of one 1/255 pixel step");
  record(r, mse_255(a, a) == 0.0, "mse of identical images");
  return r;
}

std::vector<SuiteReport> run_verify(const VerifyOptions& options) {
  return {verify_gradients(options), verify_geometry(options), verify_losses(options), verify_metrics(options)};
}

}  // namespace gradmdm
