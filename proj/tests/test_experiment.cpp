#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "gradmdm/experiment.hpp"

using namespace gradmdm;

namespace {

const PanelNet& small_panel(std::uint64_t seed) {
  static const std::vector<PanelNet> panels = [] {
    PanelSpec spec;
    spec.train_samples = 200;
    spec.eval_samples = 4;
    return std::vector<PanelNet>{build_panel_net(spec, 0), build_panel_net(spec, 1)};
  }();
  return panels.at(seed);
}

AttackResult fake_result(double mse, std::optional<double> arp_value, std::size_t activated,
                         std::vector<std::vector<double>> gates = {}) {
  AttackResult r;
  r.mse_255 = mse;
  r.psnr_db = psnr(mse);
  // FLOPs consistent with the requested ARP: clean 40, full 100.
  r.clean_flops = arp_value ? 40.0 : 100.0;
  r.full_flops = 100.0;
  r.attacked_flops = arp_value ? 40.0 + 0.6 * *arp_value : 100.0;
  r.arp = arp_value;
  r.attacked_activated = activated;
  for (auto& g : gates) {
    TraceRow row;
    row.gates = std::move(g);
    r.trace.push_back(std::move(row));
  }
  return r;
}

}  // namespace

TEST(Csv, RealFormatting) {
  EXPECT_EQ(format_real(0.0), "0");
  EXPECT_EQ(format_real(1.5), "1.5");
  EXPECT_EQ(format_real(123456789.0), "1.23457e+08");
  EXPECT_EQ(format_real(std::numeric_limits<double>::quiet_NaN()), "nan");
  EXPECT_EQ(format_real(std::numeric_limits<double>::infinity()), "inf");
  EXPECT_EQ(format_real(-std::numeric_limits<double>::infinity()), "-inf");
}

TEST(Csv, HeaderAndRow) {
  EXPECT_EQ(csv_header(), "method,gamma,alpha,seed,sample,arp,mse_255,psnr_db,mean_activated,wall_ms");
  SweepRow row;
  row.method = Method::joint_pf;
  row.gamma = 0.001;
  row.alpha = 4;
  row.seed = 3;
  row.arp = 12.5;
  row.mse_255 = 0.25;
  row.psnr_db = psnr(0.25);
  row.mean_activated = 2.75;
  EXPECT_EQ(csv_line(row), "joint-pf,0.001,4,3,all,12.5,0.25,54.1514,2.75,0");
  row.sample = 7;
  row.arp.reset();
  EXPECT_EQ(csv_line(row), "joint-pf,0.001,4,3,7,nan,0.25,54.1514,2.75,0");
  const std::vector<SweepRow> rows{row};
  EXPECT_EQ(to_csv(rows), csv_header() + "\n" + csv_line(row) + "\n");
}

TEST(Aggregate, MeansAndExclusions) {
  const std::vector<AttackResult> results{fake_result(1.0, 20.0, 2), fake_result(3.0, std::nullopt, 4),
                                          fake_result(2.0, 40.0, 3)};
  AttackConfig c;
  c.method = Method::baseline;
  const SweepRow agg = aggregate_row(c, 5, results);
  EXPECT_FALSE(agg.sample.has_value());
  ASSERT_TRUE(agg.arp.has_value());
  EXPECT_DOUBLE_EQ(*agg.arp, 30.0);
  EXPECT_DOUBLE_EQ(agg.mse_255, 2.0);
  EXPECT_DOUBLE_EQ(agg.psnr_db, psnr(2.0));
  EXPECT_DOUBLE_EQ(agg.mean_activated, 3.0);
  EXPECT_EQ(agg.method, Method::baseline);
  EXPECT_EQ(agg.seed, 5u);

  const auto rows = sample_rows(c, 5, results);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[1].sample, 1u);
  EXPECT_FALSE(rows[1].arp.has_value());
  EXPECT_DOUBLE_EQ(rows[2].mse_255, 2.0);
}

TEST(Aggregate, NoSavingsAnywhere) {
  const std::vector<AttackResult> results{fake_result(1.0, std::nullopt, 6)};
  EXPECT_FALSE(aggregate_row(AttackConfig{}, 0, results).arp.has_value());
}

TEST(GateFlipsMedian, AveragesThenMedian) {
  // Sample A flips gate0 twice, gate1 never, gate2 once; sample B flips gate2 three times.
  const std::vector<AttackResult> results{
      fake_result(0, 0.0, 0, {{0.4, 0.4, 0.4}, {0.6, 0.4, 0.6}, {0.4, 0.4, 0.6}}),
      fake_result(0, 0.0, 0, {{0.4, 0.4, 0.4}, {0.4, 0.4, 0.6}, {0.4, 0.4, 0.4}, {0.4, 0.4, 0.6}})};
  // Per-gate means: 1, 0, 2 -> median 1.
  EXPECT_DOUBLE_EQ(median_gate_flips(results, 0.5), 1.0);
}

TEST(Sweep, RowsSortedAndComplete) {
  SweepGrid grid{{Method::gradmdm, Method::baseline}, {0.01, 0.001}, {4, 1}};
  AttackConfig base;
  base.iterations = 10;
  const std::vector<PanelNet> panel{small_panel(1), small_panel(0)};
  const auto rows = run_sweep(grid, base, panel, 1);
  ASSERT_EQ(rows.size(), 2u * grid.cells());
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto key = [](const SweepRow& r) { return std::tuple(r.seed, r.method, r.gamma, r.alpha); };
    EXPECT_LT(key(rows[i - 1]), key(rows[i]));
  }
  for (const auto& r : rows) {
    EXPECT_FALSE(r.sample.has_value());
    EXPECT_EQ(r.wall_ms, 0.0);
  }
}

TEST(Sweep, ParallelMatchesSerial) {
  SweepGrid grid{{Method::gradmdm, Method::cgm_only, Method::relaxed}, {0.001}, {4, 2}};
  AttackConfig base;
  base.iterations = 15;
  const std::vector<PanelNet> panel{small_panel(0), small_panel(1)};
  EXPECT_EQ(to_csv(run_sweep(grid, base, panel, 1)), to_csv(run_sweep(grid, base, panel, 4)));
}

TEST(Sweep, EmptyInputsRejected) {
  const std::vector<PanelNet> panel{small_panel(0)};
  EXPECT_THROW(run_sweep(SweepGrid{}, AttackConfig{}, panel), std::invalid_argument);
  EXPECT_THROW(run_sweep(SweepGrid{{Method::gradmdm}, {1.0}, {4.0}}, AttackConfig{}, {}), std::invalid_argument);
}

TEST(Sweep, TimingRecordedOnlyOnRequest) {
  AttackConfig c;
  c.iterations = 5;
  EXPECT_EQ(evaluate_cell(small_panel(0), c).row.wall_ms, 0.0);
  EXPECT_GT(evaluate_cell(small_panel(0), c, 1, true).row.wall_ms, 0.0);
}

TEST(Calibration, HitsTargetMse) {
  AttackConfig c;
  c.method = Method::relaxed;
  c.iterations = 40;
  c.gamma = 1e-3;
  const double target = evaluate_cell(small_panel(0), [&] {
                          AttackConfig g = c;
                          g.gamma = 0.05;
                          return g;
                        }()).row.mse_255;
  const Calibration cal = calibrate_gamma(small_panel(0), c, target);
  EXPECT_TRUE(cal.matched);
  EXPECT_NEAR(cal.cell.row.mse_255, target, 0.1 * target);
  EXPECT_GE(cal.evaluations, 1u);
}

TEST(Calibration, RejectsBadTarget) {
  EXPECT_THROW(calibrate_gamma(small_panel(0), AttackConfig{}, -1.0), std::invalid_argument);
}
