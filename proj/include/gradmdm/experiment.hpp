#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gradmdm/attack.hpp"
#include "gradmdm/dataset.hpp"
#include "gradmdm/training.hpp"

namespace gradmdm {

/// Training set for `seed` (dataset sub-stream).
SynthDataset training_data(std::uint64_t seed, std::size_t n, std::size_t classes);
/// Attack inputs for `seed` (eval sub-stream, disjoint from training data).
/// Any n >= 0; the first n of a larger draw when n < classes.
SynthDataset evaluation_data(std::uint64_t seed, std::size_t n, std::size_t classes);

struct PanelSpec {
  TrainConfig train;
  std::size_t train_samples = 400;
  std::size_t eval_samples = 16;
};

struct PanelNet {
  std::uint64_t seed = 0;
  TrainResult trained;
  SynthDataset eval;
};

/// Trains one toy net from `seed` and draws its evaluation inputs.
PanelNet build_panel_net(const PanelSpec& spec, std::uint64_t seed);

struct SweepRow {
  Method method = Method::gradmdm;
  double gamma = 0.0;
  double alpha = 0.0;
  std::uint64_t seed = 0;
  std::optional<std::size_t> sample;  // empty on the aggregate row
  std::optional<double> arp;          // empty when no savings were available
  double mse_255 = 0.0;
  double psnr_db = 0.0;
  double mean_activated = 0.0;
  double wall_ms = 0.0;
};

/// Real in 6 significant digits; "nan", "inf", "-inf" for non-finite values.
std::string format_real(double v);
std::string csv_header();
std::string csv_line(const SweepRow& row);
std::string to_csv(std::span<const SweepRow> rows);

/// Per-sample rows followed by nothing else.
std::vector<SweepRow> sample_rows(const AttackConfig& config, std::uint64_t seed,
                                  std::span<const AttackResult> results);
/// One row summarising a batch: mean ARP over samples with savings, mean
/// MSE, PSNR of the mean MSE, mean activated gates after the attack.
SweepRow aggregate_row(const AttackConfig& config, std::uint64_t seed, std::span<const AttackResult> results,
                       double wall_ms = 0.0);

/// Median over gates of the per-gate flip count, each gate's count averaged
/// over samples.
double median_gate_flips(std::span<const AttackResult> results, double tau);

struct CellResult {
  SweepRow row;
  std::vector<AttackResult> results;
};

/// Attacks every input of `panel` with `config` and summarises.
CellResult evaluate_cell(const PanelNet& panel, const AttackConfig& config, std::size_t jobs = 1,
                         bool timing = false);

struct SweepGrid {
  std::vector<Method> methods;
  std::vector<double> gammas;
  std::vector<double> alphas;

  std::size_t cells() const { return methods.size() * gammas.size() * alphas.size(); }
};

/// Full factorial grid times the panel seeds. Cells run on `jobs` workers;
/// rows come back sorted by (seed, method, gamma, alpha) whatever the
/// schedule. wall_ms is recorded only when `timing` is set so the CSV stays
/// byte-stable otherwise.
std::vector<SweepRow> run_sweep(const SweepGrid& grid, const AttackConfig& base, std::span<const PanelNet> panel,
                                std::size_t jobs = 1, bool timing = false);

struct Calibration {
  CellResult cell;
  bool matched = false;
  std::size_t evaluations = 0;
};

/// Searches gamma (log-space bisection) so the aggregate MSE of `config`
/// lands within rel_tol of target_mse. Assumes MSE falls as gamma rises.
/// Starts from config.gamma; the best cell found is returned if no gamma
/// matches.
Calibration calibrate_gamma(const PanelNet& panel, AttackConfig config, double target_mse, double rel_tol = 0.1,
                            std::size_t max_evaluations = 24, std::size_t jobs = 1);

}  // namespace gradmdm
