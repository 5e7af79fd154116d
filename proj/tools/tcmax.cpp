// tcmax: exact total correlation, DV estimation, TCMax training and the
// property suite.
//
// Exit codes: 0 success, 1 usage/config error, 2 invariant or verification
// failure, 3 numerical abort.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tcmax/config.hpp"
#include "tcmax/error.hpp"
#include "tcmax/estimators.hpp"
#include "tcmax/format.hpp"
#include "tcmax/prob.hpp"
#include "tcmax/trainer.hpp"
#include "tcmax/verify.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace tcmax;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitInvariant = 2;
constexpr int kExitNumerical = 3;

using Clock = std::chrono::steady_clock;

std::string command_line(int argc, char** argv) {
  std::string out;
  for (int i = 0; i < argc; ++i) out += (i ? " " : "") + std::string(argv[i]);
  return out;
}

// Numbers go through format_number so they round-trip exactly.
json number(double v) { return json::parse(format_number(v)); }

json number_or_string(double v) { return std::isfinite(v) ? number(v) : json(format_number(v)); }

void write_manifest(const fs::path& dir, const std::string& command, const std::string& config,
                    const std::vector<std::uint64_t>& seeds, const std::vector<std::string>& outputs,
                    Clock::time_point start) {
  json m;
  m["command"] = command;
  m["config"] = config;
  m["seeds"] = seeds;
  m["tool_version"] = kToolVersion;
  m["outputs"] = outputs;
  m["wall_clock_seconds"] = number(std::chrono::duration<double>(Clock::now() - start).count());
  write_file_atomic(dir / "manifest.json", m.dump(2) + "\n");
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    std::uint64_t v = 0;
    try {
      v = std::stoull(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) throw ConfigError("--seeds: '" + item + "' is not a seed");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("--seeds: empty list");
  return out;
}

// --- tc --------------------------------------------------------------------

int cmd_tc(const std::string& file, bool bits) {
  const JointDistribution d = load_distribution(file);
  const double unit = bits ? 1.0 / std::numbers::ln2 : 1.0;
  const std::size_t n = d.num_variables();
  auto show = [&](double nats) { return format_number(nats * unit); };

  std::cout << "variables: " << n << "\n";
  std::cout << "unit: " << (bits ? "bits" : "nats") << "\n";
  const double tc = total_correlation(d);
  const double tc_kl = total_correlation_kl(d);
  std::cout << "tc_entropy_form: " << show(tc) << "\n";
  std::cout << "tc_kl_form: " << show(tc_kl) << "\n";
  std::cout << "tc_form_residual: " << show(std::abs(tc - tc_kl)) << "\n";
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b)
      std::cout << "mi[" << a << ";" << b << "]: " << show(mutual_information(d, VariableSubset{a}, VariableSubset{b}))
                << "\n";
  if (n < 2) return kExitOk;

  // The last variable plays the label.
  const std::size_t y = n - 1;
  std::vector<std::size_t> feature_idx;
  for (std::size_t m = 0; m < y; ++m) feature_idx.push_back(m);
  const VariableSubset label{y};
  const VariableSubset features(feature_idx);
  const double joint_part = mutual_information(d, label, features);
  const double feature_tc = total_correlation(marginalize(d, features));
  const double first = joint_part + feature_tc;
  std::cout << "decomposition_label_joint: I(y;x) " << show(joint_part) << " + TC(x) " << show(feature_tc) << " = "
            << show(first) << " residual " << show(std::abs(first - tc)) << "\n";

  double label_parts = 0.0;
  for (std::size_t m = 0; m < y; ++m) label_parts += mutual_information(d, label, VariableSubset{m});
  const double h_y = entropy(d, label);
  double conditional = -(entropy(d, VariableSubset(std::vector<std::size_t>(feature_idx.begin(), feature_idx.end()))
                                        .merged(label)) -
                         h_y);
  for (std::size_t m = 0; m < y; ++m) conditional += entropy(d, VariableSubset{m, y}) - h_y;
  const double second = label_parts + conditional;
  std::cout << "decomposition_per_modality: sum I(y;x_m) " << show(label_parts) << " + TC(x|y) " << show(conditional)
            << " = " << show(second) << " residual " << show(std::abs(second - tc)) << "\n";
  return kExitOk;
}

// --- estimate ----------------------------------------------------------------

struct EstimateArgs {
  std::string file;
  std::string critic = "tabular";
  std::optional<std::size_t> iters;
  std::optional<double> lr;
  std::uint64_t seed = 0;
  std::size_t batch = 256;
  std::vector<std::size_t> hidden{64};
  std::string out = "tcmax_out/estimate";
};

int cmd_estimate(const EstimateArgs& a, const std::string& command, Clock::time_point start) {
  if (a.critic != "tabular" && a.critic != "neural")
    throw ConfigError("--critic must be tabular or neural, got '" + a.critic + "'");
  const JointDistribution d = load_distribution(a.file);
  const double exact = total_correlation(d);

  std::vector<DvEstimate> trace;
  double estimate = 0.0;
  std::size_t iters = 0;
  double lr = 0.0;
  if (a.critic == "tabular") {
    iters = a.iters.value_or(20000);
    lr = a.lr.value_or(1.0);
    auto fit = tcne_fit_tabular(d, iters, lr);
    trace = std::move(fit.trace);
    estimate = trace.back().lower_bound;
  } else {
    NeuralFitConfig cfg;
    cfg.iterations = a.iters.value_or(cfg.iterations);
    cfg.learning_rate = a.lr.value_or(cfg.learning_rate);
    cfg.batch_size = a.batch;
    cfg.seed = a.seed;
    iters = cfg.iterations;
    lr = cfg.learning_rate;
    TupleSource source(d, Rng(a.seed).split(1)());
    NeuralCritic critic = NeuralCritic::create(d.alphabet_sizes(), a.hidden, Activation::relu, Rng(a.seed).split(2)());
    trace = tcne_fit_neural(source, critic, cfg);
    estimate = smoothed_estimate(trace);
  }

  const fs::path dir(a.out);
  fs::create_directories(dir);
  {
    std::ostringstream csv;
    write_trace_csv(csv, trace);
    write_file_atomic(dir / "trace.csv", csv.str());
  }
  json summary;
  summary["critic"] = a.critic;
  summary["iterations"] = iters;
  summary["learning_rate"] = number(lr);
  summary["exact_tc"] = number(exact);
  summary["estimate"] = number(estimate);
  summary["gap"] = number(exact - estimate);
  write_file_atomic(dir / "summary.json", summary.dump(2) + "\n");

  std::ostringstream config;
  config << "file = " << fs::absolute(a.file).lexically_normal().string() << "\ncritic = " << a.critic
         << "\niters = " << iters << "\nlr = " << format_number(lr) << "\nseed = " << a.seed;
  if (a.critic == "neural") {
    config << "\nbatch = " << a.batch << "\nhidden = ";
    for (std::size_t i = 0; i < a.hidden.size(); ++i) config << (i ? "," : "") << a.hidden[i];
  }
  config << "\n";
  write_manifest(dir, command, config.str(), {a.seed},
                 {(dir / "trace.csv").string(), (dir / "summary.json").string()}, start);

  std::cout << "exact_tc: " << format_number(exact) << "\n";
  std::cout << "estimate: " << format_number(estimate) << "\n";
  std::cout << "gap: " << format_number(exact - estimate) << "\n";
  std::cout << "trace: " << (dir / "trace.csv").string() << "\n";
  return kExitOk;
}

// --- train -------------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string seeds;
  std::vector<std::size_t> negatives;
  std::string out = "tcmax_out/train";
};

json metrics_json(const EvalMetrics& m) {
  json j;
  j["multi_accuracy"] = number(m.multi_accuracy);
  j["modality_accuracy"] = json::array();
  for (double a : m.modality_accuracy) j["modality_accuracy"].push_back(number(a));
  j["js_divergence"] = number(m.js_divergence);
  j["modality_entropy"] = json::array();
  for (double h : m.modality_entropy) j["modality_entropy"].push_back(number(h));
  j["entropy_ratio"] = number_or_string(m.entropy_ratio);
  j["strong_modality"] = m.strong_modality;
  j["weak_modality"] = m.weak_modality;
  return j;
}

int cmd_train(const TrainArgs& a, const std::string& command, Clock::time_point start) {
  ExperimentConfig cfg = load_experiment_config(a.config);
  if (a.seed && !a.seeds.empty()) throw ConfigError("use either --seed or --seeds");
  if (a.seed) {
    cfg.seed = *a.seed;
    cfg.data.seed = cfg.train.seed = cfg.seed;
  }
  const std::vector<std::uint64_t> seeds = a.seeds.empty() ? std::vector<std::uint64_t>{cfg.seed} : parse_seed_list(a.seeds);

  const fs::path dir(a.out);
  fs::create_directories(dir);
  std::vector<std::string> outputs;
  const std::string echo = to_ini(cfg);
  write_file_atomic(dir / "config.ini", echo);
  outputs.push_back((dir / "config.ini").string());

  json summary;
  summary["seeds"] = seeds;

  if (!a.negatives.empty()) {
    std::cerr << "negatives sweep: tcmax_sampled at";
    for (auto k : a.negatives) std::cerr << " " << k;
    std::cerr << " plus full enumeration and a tcmax_full reference, " << seeds.size() << " seed(s)\n";
    const auto points = negatives_sweep(cfg, a.negatives, seeds);
    std::ostringstream csv;
    write_sweep_csv(csv, points, seeds);
    write_file_atomic(dir / "sweep.csv", csv.str());
    outputs.push_back((dir / "sweep.csv").string());
    summary["sweep"] = json::array();
    for (const auto& p : points) {
      json j;
      j["strategy"] = p.strategy;
      j["negatives"] = p.negatives;
      j["full_enumeration"] = p.full_enumeration;
      j["median_multi_accuracy"] = number(p.median_multi_accuracy);
      summary["sweep"].push_back(j);
      std::cout << p.strategy << " negatives=" << p.negatives << (p.full_enumeration ? " (full)" : "")
                << " median_multi_acc=" << format_number(p.median_multi_accuracy) << "\n";
    }
  } else {
    std::vector<SeedRun> runs;
    summary["runs"] = json::array();
    for (auto seed : seeds) {
      SeedRun run = run_experiment(cfg, seed);
      const fs::path csv_path = dir / ("records_seed" + std::to_string(seed) + ".csv");
      std::ostringstream csv;
      write_records_csv(csv, run.records);
      write_file_atomic(csv_path, csv.str());
      outputs.push_back(csv_path.string());
      json r;
      r["seed"] = seed;
      if (!run.records.empty()) {
        const auto& last = run.records.back();
        std::cerr << "seed " << seed << ": strong modality " << last.metrics.strong_modality << ", weak modality "
                  << last.metrics.weak_modality << " (by test accuracy)\n";
        r["final"] = metrics_json(last.metrics);
        r["final"]["epoch"] = last.epoch;
        r["final"]["train_loss"] = number(last.train_loss);
        if (last.tc_lower_bound) r["final"]["tc_lower_bound"] = number(*last.tc_lower_bound);
      }
      summary["runs"].push_back(r);
      runs.push_back(std::move(run));
    }
    if (cfg.train.epochs > 0) {
      const MetricMedians med = final_medians(runs);
      json m;
      m["multi_accuracy"] = number(med.multi_accuracy);
      m["modality_accuracy"] = json::array();
      for (double v : med.modality_accuracy) m["modality_accuracy"].push_back(number(v));
      m["js_divergence"] = number(med.js_divergence);
      m["entropy_ratio"] = number_or_string(med.entropy_ratio);
      if (med.tc_lower_bound) m["tc_lower_bound"] = number(*med.tc_lower_bound);
      summary["median"] = m;
      std::cout << "median_multi_accuracy: " << format_number(med.multi_accuracy) << "\n";
      for (std::size_t k = 0; k < med.modality_accuracy.size(); ++k)
        std::cout << "median_accuracy_m" << k << ": " << format_number(med.modality_accuracy[k]) << "\n";
      std::cout << "median_js_divergence: " << format_number(med.js_divergence) << "\n";
      std::cout << "median_entropy_ratio: " << format_number(med.entropy_ratio) << "\n";
      if (med.tc_lower_bound) std::cout << "median_tc_lower_bound: " << format_number(*med.tc_lower_bound) << "\n";
    }
  }
  summary["strategy"] = to_string(cfg.train.strategy);
  write_file_atomic(dir / "summary.json", summary.dump(2) + "\n");
  outputs.push_back((dir / "summary.json").string());
  write_manifest(dir, command, echo, seeds, outputs, start);
  std::cout << "outputs: " << dir.string() << "\n";
  return kExitOk;
}

// --- verify ------------------------------------------------------------------

int cmd_verify(bool corrupt_lse) {
  VerifyOptions opts;
  if (corrupt_lse) opts.lse_fault = -0.5;
  const auto start = Clock::now();
  const auto results = run_verification(opts, [](const CheckResult& r) { std::cout << format_check(r) << std::endl; });
  std::size_t failed = 0;
  for (const auto& r : results) failed += !r.passed;
  const double total = std::chrono::duration<double>(Clock::now() - start).count();
  std::cout << (failed ? "FAILED " : "OK ") << results.size() - failed << "/" << results.size()
            << " checks passed in " << format_number(std::round(total * 1000.0) / 1000.0) << " s\n";
  return failed ? kExitInvariant : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  const auto start = Clock::now();
  const std::string command = command_line(argc, argv);

  CLI::App app{"tcmax: total correlation, DV bounds and TCMax training"};
  app.require_subcommand(1);

  std::string tc_file;
  bool bits = false;
  auto* tc = app.add_subcommand("tc", "Exact total correlation, pairwise MI and both label decompositions");
  tc->add_option("file", tc_file, "Distribution JSON {\"alphabet_sizes\": [...], \"mass\": [...]}, label last")
      ->required();
  tc->add_flag("--bits", bits, "Report in bits instead of nats");

  EstimateArgs est;
  auto* estimate = app.add_subcommand("estimate", "Fit a DV critic and compare with the exact TC");
  estimate->add_option("file", est.file, "Distribution JSON")->required();
  estimate->add_option("--critic", est.critic, "tabular | neural")->capture_default_str();
  estimate->add_option("--iters", est.iters, "Iterations (default 20000 tabular, 3000 neural)");
  estimate->add_option("--lr", est.lr, "Step size (default 1.0 tabular, 0.01 neural)");
  estimate->add_option("--seed", est.seed, "Sampling and init seed (neural)")->capture_default_str();
  estimate->add_option("--batch", est.batch, "Joint samples per step (neural)")->capture_default_str();
  estimate->add_option("--hidden", est.hidden, "Hidden widths of the neural critic")->delimiter(',')->capture_default_str();
  estimate->add_option("--out", est.out, "Output directory")->capture_default_str();

  TrainArgs tr;
  auto* trainc = app.add_subcommand("train", "Train on synthetic data from an INI config");
  trainc->footer(config_reference());
  trainc->add_option("config", tr.config, "Experiment config file")->required();
  trainc->add_option("--seed", tr.seed, "Override the config seed");
  trainc->add_option("--seeds", tr.seeds, "Comma-separated seed sweep; medians are reported");
  trainc->add_option("--negatives", tr.negatives, "Comma-separated negative counts for a tcmax_sampled sweep")
      ->delimiter(',');
  trainc->add_option("--out", tr.out, "Output directory")->capture_default_str();

  bool corrupt_lse = false;
  auto* verify = app.add_subcommand("verify", "Run the property suite; exit 2 on any failure");
  verify->add_flag("--corrupt-lse", corrupt_lse, "Fault injection: shift every log-sum-exp (the suite must fail)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*tc) return cmd_tc(tc_file, bits);
    if (*estimate) return cmd_estimate(est, command, start);
    if (*trainc) return cmd_train(tr, command, start);
    if (*verify) return cmd_verify(corrupt_lse);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericalError& e) {
    std::cerr << "numerical abort: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const InvariantViolation& e) {
    std::cerr << "invariant violated: " << e.what() << "\n";
    return kExitInvariant;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvariant;
  }
  return kExitUsage;
}
