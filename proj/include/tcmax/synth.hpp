#pragma once

// Seeded two-modality (or more) labeled data.
//
// gaussian_clusters: x^m = signal_m * mu_{m,y} + noise_m * (sqrt(1-c^2) eps_m + c P_m s)
//   mu_{m,y} unit-norm class means drawn once per seed, s a latent shared by all
//   modalities of a sample, c the coupling strength.
// discrete_table: (x^1..x^M, y) drawn i.i.d. from an explicit table; each
//   modality is the one-hot encoding of its symbol.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tcmax/estimators.hpp"
#include "tcmax/model.hpp"
#include "tcmax/prob.hpp"

namespace tcmax {

enum class GeneratorKind { gaussian_clusters, discrete_table };

GeneratorKind generator_kind_from_string(const std::string& name);
std::string to_string(GeneratorKind kind);

struct ModalitySpec {
  std::size_t dim = 8;
  double signal = 1.0;
  double noise = 1.0;
};

/// Largest table accepted by the discrete_table generator.
inline constexpr std::size_t kMaxDiscreteCells = 10'000;

struct GeneratorConfig {
  GeneratorKind kind = GeneratorKind::gaussian_clusters;
  std::size_t num_classes = 4;
  std::vector<ModalitySpec> modalities;
  double coupling = 0.5;
  std::size_t train_size = 2000;
  std::size_t test_size = 1000;
  std::uint64_t seed = 0;
  /// discrete_table only: table over (x^1, ..., x^M, y), label last.
  std::optional<JointDistribution> table;

  /// Strong modality (signal 3.0) next to a weak one (signal 0.8), four classes.
  static GeneratorConfig competition_default();
  void validate() const;
};

struct LabeledDataset {
  Batch train;
  Batch test;
  /// discrete_table only.
  std::optional<JointDistribution> ground_truth;
  std::vector<Outcome> train_outcomes;
  std::vector<Outcome> test_outcomes;
  GeneratorConfig config;

  bool discrete() const noexcept { return ground_truth.has_value(); }
};

LabeledDataset generate(const GeneratorConfig& config);

/// Plug-in frequency table of the training outcomes of a discrete dataset.
JointDistribution empirical_distribution(const LabeledDataset& dataset);
JointDistribution empirical_distribution(std::span<const Outcome> outcomes, std::vector<std::size_t> alphabet_sizes);

/// Discrete dataset whose train and test splits both hold every cell of
/// `table` exactly round(mass * total) times.
LabeledDataset exact_frequency_dataset(const JointDistribution& table, std::size_t total);

/// One-hot batch for outcomes of (x^1..x^M, y), label last.
Batch batch_from_outcomes(std::span<const Outcome> outcomes, const std::vector<std::size_t>& alphabet_sizes);

std::string dataset_to_json(const LabeledDataset& dataset);
LabeledDataset dataset_from_json(const std::string& text);

}  // namespace tcmax
