#pragma once

// Experiment configuration files and the run/sweep driver behind `tcmax train`.
// Format: INI key = value pairs; whole-line comments start with ';' or '#'.
// config_reference() lists every key with its unit. Unknown keys are errors.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "tcmax/model.hpp"
#include "tcmax/synth.hpp"
#include "tcmax/trainer.hpp"

namespace tcmax {

inline constexpr const char* kToolVersion = "0.1.0";

struct ExperimentConfig {
  GeneratorConfig data;
  ModelConfig model;
  TrainConfig train;
  std::uint64_t seed = 0;
  /// discrete_table only: where the table was loaded from (echoed back).
  std::optional<std::filesystem::path> table_path;

  /// Competition scenario: strong and weak gaussian modalities, linear_sum head.
  static ExperimentConfig competition_default();
  /// Throws ConfigError.
  void validate() const;
};

/// `base_dir` resolves relative table paths.
ExperimentConfig parse_experiment_config(const std::string& text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
/// Canonical text that parses back to the same configuration.
std::string to_ini(const ExperimentConfig& config);
/// Key reference for --help.
std::string config_reference();

struct SeedRun {
  std::uint64_t seed = 0;
  std::vector<EpochRecord> records;
};

/// Data, initialisation and batch order all derive from `seed`.
SeedRun run_experiment(const ExperimentConfig& config, std::uint64_t seed);

struct MetricMedians {
  double multi_accuracy = 0.0;
  std::vector<double> modality_accuracy;
  double js_divergence = 0.0;
  double entropy_ratio = 0.0;
  std::optional<double> tc_lower_bound;
};

/// Medians of the final-record metrics across runs.
MetricMedians final_medians(const std::vector<SeedRun>& runs);

double median(std::vector<double> values);

struct SweepPoint {
  std::string strategy;
  std::size_t negatives = 0;  // 0 for tcmax_full
  bool full_enumeration = false;
  std::vector<double> multi_accuracy;  // one per seed
  double median_multi_accuracy = 0.0;
};

/// One tcmax_sampled run per count and seed, plus the full-enumeration count
/// (batch_size^modalities) and a tcmax_full reference.
std::vector<SweepPoint> negatives_sweep(const ExperimentConfig& config, const std::vector<std::size_t>& counts,
                                        const std::vector<std::uint64_t>& seeds);

void write_sweep_csv(std::ostream& out, const std::vector<SweepPoint>& points, const std::vector<std::uint64_t>& seeds);

/// Writes to a sibling temporary file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace tcmax
