#pragma once

// Training objectives for multimodal classifiers, each returning the scalar
// loss together with its exact gradient over every model parameter.
//
// The TCMax family minimizes the negated Donsker-Varadhan objective with the
// classifier's logit F(x^1..x^M, y) as the critic:
//
//   L = -(1/|B|) sum_i F(x_i, y_i) + log sum_{tuples, y'} exp F(tuple, y') - log(|tuples| |Y|)
//
// where the label marginal in the denominator is taken to be uniform.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "tcmax/model.hpp"
#include "tcmax/nn.hpp"

namespace tcmax {

struct LossResult {
  double value = 0.0;
  GradientSet grads;
};

/// Largest batch accepted by tcmax_full with a concat_mlp head (|B|^2 head
/// evaluations per step).
inline constexpr std::size_t kMaxFullBatchConcat = 128;

/// Cross-sample tuples drawn uniformly without replacement from B x ... x B.
struct NegativeSampleSet {
  TupleIndex tuples;
  std::uint64_t seed = 0;

  std::size_t size() const noexcept { return tuples.size(); }
};

/// Draws min(count, batch_size^arity) distinct tuples. Deterministic in `seed`.
NegativeSampleSet sample_negatives(std::size_t batch_size, std::size_t arity, std::size_t count,
                                   std::uint64_t seed);
/// Every tuple of B x ... x B.
NegativeSampleSet all_negatives(std::size_t batch_size, std::size_t arity);

/// Mean cross-entropy of the fused prediction.
LossResult joint_ce_loss(const MultimodalModel& model, const Batch& batch);

/// Mean over the batch of the summed per-modality cross-entropies. Needs a
/// decomposable (linear) head.
LossResult unimodal_loss(const MultimodalModel& model, const Batch& batch);

/// TCMax with the full |B|^M denominator.
LossResult tcmax_full(const MultimodalModel& model, const Batch& batch);

/// TCMax with the denominator restricted to a sampled negative set.
LossResult tcmax_sampled(const MultimodalModel& model, const Batch& batch, const NegativeSampleSet& negatives);

/// TCMax for linear heads with the denominator factored per modality: only
/// |B| head evaluations per modality.
LossResult tcmax_factored(const MultimodalModel& model, const Batch& batch);

/// Inputs with real-valued targets, for the regression form of TCMax.
struct RegressionBatch {
  std::vector<Matrix> inputs;
  Vector targets;

  std::size_t size() const noexcept { return static_cast<std::size_t>(targets.size()); }
};

struct RegressionLossConfig {
  double sigma = 0.5;
  double lambda = 1.0;
};

/// Model outputs (y_pred, c_pred) per sample (a two-output model). Loss:
///   MSE/sigma^2 + lambda*(-mean c_pred + log mean_{negatives} e^{c_pred}) + log(sqrt(pi)*sigma)
LossResult tcmax_regression(const MultimodalModel& model, const RegressionBatch& batch,
                            const NegativeSampleSet& negatives, const RegressionLossConfig& config);

/// Softmax over classes of F(x^1..x^M, .), one row per sample.
Matrix predict_batch(const MultimodalModel& model, const std::vector<Matrix>& inputs);
/// Categorical over classes for a single sample (one vector per modality).
std::vector<double> predict(const MultimodalModel& model, const std::vector<Vector>& sample);

/// Index of the largest entry; ties go to the lowest index.
std::size_t argmax(std::span<const double> values);
std::size_t argmax_row(const Matrix& m, Eigen::Index row);

}  // namespace tcmax
