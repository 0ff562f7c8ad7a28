#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <stdexcept>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include "gradmdm/checkpoint.hpp"
#include "gradmdm/experiment.hpp"
#include "gradmdm/parallel.hpp"
#include "gradmdm/seed.hpp"
#include "gradmdm/verify.hpp"

namespace gradmdm::cli {

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Config files hold plain `key = value` lines; keys outside a section
// belong to the subcommand being run.
class SubcommandConfig : public CLI::ConfigINI {
 public:
  explicit SubcommandConfig(const CLI::App* app) : app_(app) {}

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    auto items = CLI::ConfigINI::from_config(input);
    const auto subs = app_->get_subcommands();
    if (subs.empty()) return items;
    for (auto& item : items)
      if (item.parents.empty()) item.parents.push_back(subs.front()->get_name());
    return items;
  }

 private:
  const CLI::App* app_;
};

struct Options {
  std::uint64_t seed = 0;
  std::string out;

  // train, and sweep without a checkpoint
  std::string arch = "skip";
  std::size_t blocks = 0;  // 0: architecture default
  double rho = TrainConfig{}.rho;
  std::size_t epochs = TrainConfig{}.epochs;
  std::size_t train_samples = 400;

  // attack / sweep
  std::string ckpt;
  std::vector<std::string> methods{"gradmdm"};
  std::vector<std::string> gammas{"100"};
  std::vector<std::string> alphas{"4"};
  std::size_t iters = AttackConfig{}.iterations;
  double warmup_frac = AttackConfig{}.warmup_frac;
  double tau = AttackConfig{}.tau;
  std::string mapping = "tanh";
  std::string norm = "l2";
  double class_loss = 0.0;
  std::string trace;
  std::size_t samples = 16;
  std::size_t jobs = 1;
  std::size_t seeds = 1;
  bool timing = false;

  // verify
  std::string inject_fault;
};

std::vector<double> parse_reals(const std::vector<std::string>& items, const char* flag) {
  std::vector<double> out;
  for (const auto& s : items) {
    if (s.empty()) continue;
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != s.size()) throw std::invalid_argument(fmt::format("{}: '{}' is not a number", flag, s));
    out.push_back(v);
  }
  return out;
}

template <class Fn>
auto as_usage(Fn&& fn) {
  try {
    return fn();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

void write_text(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  f << text;
  if (!f) throw std::runtime_error("write to '" + path + "' failed");
}

TrainConfig train_config(const Options& o) {
  TrainConfig tc;
  tc.arch.kind = parse_block_kind(o.arch);
  tc.arch.blocks = o.blocks ? o.blocks : (tc.arch.kind == BlockKind::skip ? 6 : 3);
  tc.rho = o.rho;
  tc.epochs = o.epochs;
  tc.validate();
  if (o.train_samples < 8) throw std::invalid_argument("--train-samples must be at least 8");
  return tc;
}

AttackConfig attack_config(const Options& o) {
  AttackConfig c;
  c.iterations = o.iters;
  c.warmup_frac = o.warmup_frac;
  c.tau = o.tau;
  c.mapping = parse_mapping(o.mapping);
  c.norm = parse_norm(o.norm);
  c.use_class_loss = o.class_loss > 0.0;
  c.class_loss_weight = o.class_loss;
  c.method = parse_method(o.methods.front());
  const auto gammas = parse_reals(o.gammas, "--gamma");
  const auto alphas = parse_reals(o.alphas, "--alpha");
  if (gammas.empty() || alphas.empty()) throw std::invalid_argument("--gamma and --alpha need a value");
  c.gamma = gammas.front();
  c.alpha = alphas.front();
  c.validate();
  return c;
}

int cmd_train(const Options& o, std::ostream& out) {
  if (o.out.empty()) throw UsageError("train: --out PATH is required");
  const TrainConfig tc = as_usage([&] { return train_config(o); });

  const SynthDataset data = training_data(o.seed, o.train_samples, tc.arch.classes);
  const TrainResult r = train_toy_net(data, tc, derive_seed(o.seed, Stream::init));
  save_checkpoint(r.net, std::filesystem::path(o.out));
  fmt::print(out, "arch {} gates {} seed {}\n", block_kind_name(tc.arch.kind), r.net.blocks.size(), o.seed);
  fmt::print(out, "attempts {}{}\n", r.attempts, r.diagnostic ? " (diagnostic, rho = 0)" : "");
  fmt::print(out, "clean_flops_ratio {}\n", format_real(r.clean_flops_ratio));
  fmt::print(out, "distinct_patterns {}\n", r.distinct_patterns);
  fmt::print(out, "holdout_accuracy {}\n", format_real(r.holdout_accuracy));
  fmt::print(out, "checkpoint {}\n", o.out);
  return kOk;
}

std::string trace_csv(std::span<const AttackResult> results) {
  std::string s = "sample,iter,method,L_mse,complexity_term,activated_count,used_flops,masked_flag,theta_deg\n";
  for (std::size_t i = 0; i < results.size(); ++i) {
    for (const auto& t : results[i].trace) {
      s += fmt::format("{},{},{},{},{},{},{},{},{}\n", i, t.iter, method_name(t.method), format_real(t.l_mse),
                       format_real(t.complexity_term), t.activated, format_real(t.used_flops), t.masked ? 1 : 0,
                       format_real(t.theta_deg));
    }
  }
  return s;
}

int cmd_attack(const Options& o, std::ostream& out) {
  const AttackConfig config = as_usage([&] {
    if (o.ckpt.empty()) throw std::invalid_argument("attack: --ckpt PATH is required");
    if (o.methods.size() != 1 || parse_reals(o.gammas, "--gamma").size() != 1 ||
        parse_reals(o.alphas, "--alpha").size() != 1) {
      throw std::invalid_argument("attack takes one method, gamma and alpha; use sweep for grids");
    }
    if (o.samples == 0) throw std::invalid_argument("--samples must be positive");
    return attack_config(o);
  });

  const DynamicNet net = load_checkpoint(std::filesystem::path(o.ckpt));
  const SynthDataset eval = evaluation_data(o.seed, o.samples, net.head.weight.shape()[0]);
  std::span<const std::size_t> labels;
  if (config.use_class_loss) labels = eval.labels;

  const auto start = std::chrono::steady_clock::now();
  const auto results = run_attacks(net, eval.inputs, labels, config, o.jobs);
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();

  auto rows = sample_rows(config, o.seed, results);
  rows.push_back(aggregate_row(config, o.seed, results, o.timing ? ms : 0.0));
  write_text(o.out, to_csv(rows), out);
  if (!o.trace.empty()) write_text(o.trace, trace_csv(results), out);
  if (!o.out.empty() && o.out != "-") {
    const SweepRow& agg = rows.back();
    fmt::print(out, "{} samples {} ARP {} mse_255 {} psnr {}\n", method_name(config.method), results.size(),
               agg.arp ? format_real(*agg.arp) : "n/a", format_real(agg.mse_255), format_real(agg.psnr_db));
  }
  return kOk;
}

int cmd_sweep(const Options& o, std::ostream& out) {
  SweepGrid grid;
  AttackConfig base;
  std::optional<TrainConfig> tc;
  as_usage([&] {
    for (const auto& m : o.methods) grid.methods.push_back(parse_method(m));
    grid.gammas = parse_reals(o.gammas, "--gamma");
    grid.alphas = parse_reals(o.alphas, "--alpha");
    if (grid.cells() == 0) throw std::invalid_argument("sweep grid is empty");
    if (o.seeds == 0) throw std::invalid_argument("--seeds must be positive");
    if (o.samples == 0) throw std::invalid_argument("--samples must be positive");
    Options first = o;
    first.methods = {o.methods.front()};
    base = attack_config(first);
    for (Method m : grid.methods)
      for (double g : grid.gammas)
        for (double a : grid.alphas) {
          AttackConfig c = base;
          c.method = m;
          c.gamma = g;
          c.alpha = a;
          c.validate();
        }
    if (o.ckpt.empty()) tc = train_config(o);
    return 0;
  });

  std::vector<PanelNet> panel(o.seeds);
  std::optional<DynamicNet> shared;
  if (!tc) shared = load_checkpoint(std::filesystem::path(o.ckpt));
  parallel_for(o.seeds, o.jobs, [&](std::size_t i) {
    const std::uint64_t seed = o.seed + i;
    if (shared) {
      panel[i].seed = seed;
      panel[i].trained.net = *shared;
      panel[i].eval = evaluation_data(seed, o.samples, shared->head.weight.shape()[0]);
    } else {
      PanelSpec spec;
      spec.train = *tc;
      spec.train_samples = o.train_samples;
      spec.eval_samples = o.samples;
      panel[i] = build_panel_net(spec, seed);
    }
  });

  const auto rows = run_sweep(grid, base, panel, o.jobs, o.timing);
  write_text(o.out, to_csv(rows), out);
  if (!o.out.empty() && o.out != "-") fmt::print(out, "{} rows written to {}\n", rows.size(), o.out);
  return kOk;
}

int cmd_verify(const Options& o, std::ostream& out) {
  VerifyOptions vo;
  vo.seed = o.seed;
  if (o.inject_fault == "reject") {
    vo.geometry.reject = [](const Tensor& a, const Tensor& b) {
      Tensor t = reject(a, b);
      t[0] += 1e-3;
      return t;
    };
  } else if (!o.inject_fault.empty()) {
    throw UsageError("unknown fault '" + o.inject_fault + "'");
  }
  bool ok = true;
  for (const auto& s : run_verify(vo)) {
    fmt::print(out, "{:<10} passed {:>5} failed {:>5}\n", s.name, s.passed, s.failed);
    for (const auto& f : s.failures) fmt::print(out, "  FAIL {}\n", f);
    ok = ok && s.ok();
  }
  fmt::print(out, "{}\n", ok ? "all suites passed" : "verification failed");
  return ok ? kOk : kVerifyFailed;
}

void add_attack_options(CLI::App* s, Options& o, bool grid) {
  s->add_option("--ckpt", o.ckpt, "Checkpoint written by train");
  const std::string many = grid ? " (comma-separated list)" : "";
  s->add_option("--method", o.methods, "relaxed|baseline|pl|cgm|gradmdm|joint-pf" + many)->delimiter(',');
  s->add_option("--gamma", o.gammas, "Imperceptibility weight" + many)->delimiter(',');
  s->add_option("--alpha", o.alphas, "Power-loss exponent" + many)->delimiter(',');
  s->add_option("--iters", o.iters, "Iterations per attack")->capture_default_str();
  s->add_option("--warmup-frac", o.warmup_frac, "Fraction of iterations using the baseline step")->capture_default_str();
  s->add_option("--tau", o.tau, "Gate threshold")->capture_default_str();
  s->add_option("--mapping", o.mapping, "tanh|clamp|tanh-literal")->capture_default_str();
  s->add_option("--norm", o.norm, "l2|linf")->capture_default_str();
  s->add_option("--samples", o.samples, "Inputs attacked per seed")->capture_default_str();
  s->add_option("--jobs", o.jobs, "Worker threads")->capture_default_str();
  s->add_flag("--timing", o.timing, "Record wall_ms (makes the CSV run-dependent)");
}

void add_train_options(CLI::App* s, Options& o) {
  s->add_option("--arch", o.arch, "skip|width")->capture_default_str();
  s->add_option("--blocks", o.blocks, "Gated blocks (skip) or gated layers (width); default 6 / 3");
  s->add_option("--rho", o.rho, "Weight of the mean gate value during training")->capture_default_str();
  s->add_option("--epochs", o.epochs, "Training epochs")->capture_default_str();
  s->add_option("--train-samples", o.train_samples, "Training set size")->capture_default_str();
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Energy-oriented attacks on toy dynamic networks"};
  app.name("gradmdm");
  app.require_subcommand(1);
  app.fallthrough();
  app.config_formatter(std::make_shared<SubcommandConfig>(&app));
  app.set_config("--config", "", "key = value file; flags override it")->check(CLI::ExistingFile);
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.add_option("--seed", o.seed, "Master seed")->capture_default_str();
  app.add_option("--out", o.out, "Output path");

  CLI::App* train = app.add_subcommand("train", "Train a toy dynamic net and write a checkpoint");
  add_train_options(train, o);

  CLI::App* attack = app.add_subcommand("attack", "Attack evaluation inputs with one method");
  add_attack_options(attack, o, false);
  attack->add_option("--class-loss", o.class_loss, "Weight of the cross-entropy term on the true label");
  attack->add_option("--trace", o.trace, "Per-iteration trace CSV");

  CLI::App* sweep = app.add_subcommand("sweep", "Method x gamma x alpha grid over seeds");
  add_attack_options(sweep, o, true);
  sweep->add_option("--seeds", o.seeds, "Number of consecutive seeds starting at --seed")->capture_default_str();
  add_train_options(sweep, o);

  CLI::App* verify = app.add_subcommand("verify", "Run the built-in invariant suites");
  verify->add_option("--inject-fault", o.inject_fault)->group("");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*train) return cmd_train(o, out);
    if (*attack) return cmd_attack(o, out);
    if (*sweep) return cmd_sweep(o, out);
    return cmd_verify(o, out);
  } catch (const UsageError& e) {
    fmt::print(err, "usage error: {}\n", e.what());
    return kUsage;
  } catch (const std::exception& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kRuntime;
  }
}

}  // namespace gradmdm::cli
