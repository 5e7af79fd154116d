#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tcmax/losses.hpp"
#include "tcmax/model.hpp"
#include "tcmax/synth.hpp"

namespace tcmax {

enum class Strategy { joint, shared_head, unimodal, tcmax_full, tcmax_sampled, tcmax_factored };

Strategy strategy_from_string(const std::string& name);
std::string to_string(Strategy strategy);
bool is_tcmax(Strategy strategy) noexcept;

struct TrainConfig {
  Strategy strategy = Strategy::joint;
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  double learning_rate = 1e-2;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::size_t negatives = 0;  // tcmax_sampled only
  std::size_t eval_every = 1;
  std::uint64_t seed = 0;

  /// Throws ConfigError on missing or inapplicable fields.
  void validate() const;
  /// Throws ConfigError when the head cannot be trained with the strategy.
  void check_compatible(const MultimodalModel& model) const;
};

struct EvalMetrics {
  double multi_accuracy = 0.0;
  std::vector<double> modality_accuracy;
  double js_divergence = 0.0;  // mean over samples (and modality pairs)
  std::vector<double> modality_entropy;
  double entropy_ratio = 1.0;  // H_weak / H_strong
  std::size_t strong_modality = 0;
  std::size_t weak_modality = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  EvalMetrics metrics;
  std::optional<double> tc_lower_bound;  // -train_loss for TCMax strategies
};

struct TrainResult {
  std::vector<EpochRecord> records;
  MultimodalModel model;
};

/// Loss and gradient of `strategy` on one minibatch. `step_seed` seeds the
/// negative set of tcmax_sampled.
LossResult strategy_loss(const MultimodalModel& model, const Batch& batch, const TrainConfig& config,
                         std::uint64_t step_seed);

/// SGD with momentum over seeded per-epoch permutations of the training split.
/// Records are emitted every `eval_every` epochs and after the last epoch.
TrainResult train(MultimodalModel model, const LabeledDataset& dataset, const TrainConfig& config);

EvalMetrics evaluate(const MultimodalModel& model, const Batch& split);

/// Test accuracy of a softmax-regression probe fitted on the training features.
double linear_probe_accuracy(const Matrix& train_x, std::span<const std::size_t> train_y, const Matrix& test_x,
                             std::span<const std::size_t> test_y, std::size_t num_classes, std::uint64_t seed);

void write_records_csv(std::ostream& out, std::span<const EpochRecord> records);

}  // namespace tcmax
