#include "gradmdm/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <limits>
#include <cmath>
#include <stdexcept>
#include <tuple>

#include <fmt/format.h>

#include "gradmdm/parallel.hpp"
#include "gradmdm/seed.hpp"

namespace gradmdm {

SynthDataset training_data(std::uint64_t seed, std::size_t n, std::size_t classes) {
  return synth_dataset(derive_seed(seed, Stream::dataset), n, classes);
}

SynthDataset evaluation_data(std::uint64_t seed, std::size_t n, std::size_t classes) {
  SynthDataset d = synth_dataset(derive_seed(seed, Stream::eval_dataset), std::max(n, classes), classes);
  d.inputs.resize(n);
  d.labels.resize(n);
  return d;
}

PanelNet build_panel_net(const PanelSpec& spec, std::uint64_t seed) {
  PanelNet p;
  p.seed = seed;
  const SynthDataset data = training_data(seed, spec.train_samples, spec.train.arch.classes);
  p.trained = train_toy_net(data, spec.train, derive_seed(seed, Stream::init));
  p.eval = evaluation_data(seed, spec.eval_samples, spec.train.arch.classes);
  return p;
}

std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) return "0";  // no "-0"
  return fmt::format("{:.6g}", v);
}

std::string csv_header() { return "method,gamma,alpha,seed,sample,arp,mse_255,psnr_db,mean_activated,wall_ms"; }

std::string csv_line(const SweepRow& r) {
  return fmt::format("{},{},{},{},{},{},{},{},{},{}", method_name(r.method), format_real(r.gamma),
                     format_real(r.alpha), r.seed, r.sample ? std::to_string(*r.sample) : std::string("all"),
                     r.arp ? format_real(*r.arp) : std::string("nan"), format_real(r.mse_255), format_real(r.psnr_db),
                     format_real(r.mean_activated), format_real(r.wall_ms));
}

std::string to_csv(std::span<const SweepRow> rows) {
  std::string out = csv_header() + "\n";
  for (const auto& r : rows) out += csv_line(r) + "\n";
  return out;
}

std::vector<SweepRow> sample_rows(const AttackConfig& config, std::uint64_t seed,
                                  std::span<const AttackResult> results) {
  std::vector<SweepRow> rows;
  rows.reserve(results.size());
  for (std::size_t i = 0; i < results.size(); ++i) {
    const AttackResult& r = results[i];
    SweepRow row;
    row.method = config.method;
    row.gamma = config.gamma;
    row.alpha = config.alpha;
    row.seed = seed;
    row.sample = i;
    row.arp = r.arp;
    row.mse_255 = r.mse_255;
    row.psnr_db = r.psnr_db;
    row.mean_activated = static_cast<double>(r.attacked_activated);
    rows.push_back(row);
  }
  return rows;
}

SweepRow aggregate_row(const AttackConfig& config, std::uint64_t seed, std::span<const AttackResult> results,
                       double wall_ms) {
  SweepRow row;
  row.method = config.method;
  row.gamma = config.gamma;
  row.alpha = config.alpha;
  row.seed = seed;
  row.wall_ms = wall_ms;
  if (results.empty()) return row;
  std::vector<FlopsTriple> flops;
  bool any_savings = false;
  for (const auto& r : results) {
    flops.push_back({r.clean_flops, r.attacked_flops, r.full_flops});
    any_savings = any_savings || r.arp.has_value();
    row.mse_255 += r.mse_255;
    row.mean_activated += static_cast<double>(r.attacked_activated);
  }
  const auto n = static_cast<double>(results.size());
  row.mse_255 /= n;
  row.mean_activated /= n;
  row.psnr_db = psnr(row.mse_255);
  if (any_savings) row.arp = aggregate_arp(flops);
  return row;
}

double median_gate_flips(std::span<const AttackResult> results, double tau) {
  std::vector<double> per_gate;
  for (const auto& r : results) {
    const auto flips = gate_flip_counts(r.trace, tau);
    if (per_gate.empty()) per_gate.assign(flips.size(), 0.0);
    for (std::size_t i = 0; i < flips.size(); ++i) per_gate[i] += static_cast<double>(flips[i]);
  }
  if (per_gate.empty()) return 0.0;
  for (auto& v : per_gate) v /= static_cast<double>(results.size());
  std::sort(per_gate.begin(), per_gate.end());
  const std::size_t m = per_gate.size() / 2;
  return per_gate.size() % 2 ? per_gate[m] : 0.5 * (per_gate[m - 1] + per_gate[m]);
}

CellResult evaluate_cell(const PanelNet& panel, const AttackConfig& config, std::size_t jobs, bool timing) {
  const auto start = std::chrono::steady_clock::now();
  CellResult cell;
  cell.results = run_attacks(panel.trained.net, panel.eval.inputs, {}, config, jobs);
  double ms = 0.0;
  if (timing) ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  cell.row = aggregate_row(config, panel.seed, cell.results, ms);
  return cell;
}

std::vector<SweepRow> run_sweep(const SweepGrid& grid, const AttackConfig& base, std::span<const PanelNet> panel,
                                std::size_t jobs, bool timing) {
  if (grid.cells() == 0) throw std::invalid_argument("sweep grid is empty");
  if (panel.empty()) throw std::invalid_argument("sweep needs at least one seed");

  struct Cell {
    std::size_t panel_index;
    AttackConfig config;
  };
  std::vector<Cell> cells;
  for (std::size_t p = 0; p < panel.size(); ++p)
    for (Method m : grid.methods)
      for (double g : grid.gammas)
        for (double a : grid.alphas) {
          AttackConfig c = base;
          c.method = m;
          c.gamma = g;
          c.alpha = a;
          c.validate();
          cells.push_back({p, c});
        }

  std::vector<SweepRow> rows(cells.size());
  parallel_for(cells.size(), jobs, [&](std::size_t i) {
    rows[i] = evaluate_cell(panel[cells[i].panel_index], cells[i].config, 1, timing).row;
  });

  auto key = [](const SweepRow& r) {
    return std::make_tuple(r.seed, static_cast<int>(r.method), r.gamma, r.alpha);
  };
  std::stable_sort(rows.begin(), rows.end(), [&](const SweepRow& a, const SweepRow& b) { return key(a) < key(b); });
  return rows;
}

Calibration calibrate_gamma(const PanelNet& panel, AttackConfig config, double target_mse, double rel_tol,
                            std::size_t max_evaluations, std::size_t jobs) {
  if (!(target_mse > 0.0)) throw std::invalid_argument("calibrate_gamma: target MSE must be positive");
  if (!(rel_tol > 0.0)) throw std::invalid_argument("calibrate_gamma: tolerance must be positive");

  Calibration best;
  double best_err = std::numeric_limits<double>::infinity();
  // +1: MSE too high (raise gamma), -1: too low, 0: matched.
  auto probe = [&](double gamma) {
    config.gamma = gamma;
    CellResult cell = evaluate_cell(panel, config, jobs);
    ++best.evaluations;
    const double err = std::abs(cell.row.mse_255 / target_mse - 1.0);
    const int side = err <= rel_tol ? 0 : (cell.row.mse_255 > target_mse ? 1 : -1);
    if (err < best_err) {
      best_err = err;
      best.cell = std::move(cell);
      best.matched = side == 0;
    }
    return side;
  };

  constexpr double kFloor = 1e-9;
  constexpr double kCeiling = 1e9;
  double gamma = std::max(config.gamma, kFloor);
  int side = probe(gamma);
  if (side == 0) return best;

  // Bracket by decades.
  double lo = gamma, hi = gamma;
  while (side != 0 && best.evaluations < max_evaluations) {
    if (side > 0) {
      lo = hi;
      if (hi >= kCeiling) return best;
      hi *= 10.0;
      side = probe(hi);
      if (side < 0) break;
    } else {
      hi = lo;
      if (lo <= kFloor) return best;
      lo /= 10.0;
      side = probe(lo);
      if (side > 0) break;
    }
  }
  // lo gives MSE above target, hi below.
  while (side != 0 && best.evaluations < max_evaluations) {
    const double mid = std::sqrt(lo * hi);
    side = probe(mid);
    (side > 0 ? lo : hi) = mid;
  }
  return best;
}

}  // namespace gradmdm
