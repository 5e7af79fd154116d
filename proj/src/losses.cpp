#include "tcmax/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "tcmax/error.hpp"

namespace tcmax {
namespace {

void check_labels(const Batch& batch, std::size_t num_classes) {
  for (std::size_t y : batch.labels)
    if (y >= num_classes)
      throw InvalidArgument("label " + std::to_string(y) + " out of range for " + std::to_string(num_classes) +
                            " classes");
}

void require_nonempty(const Batch& batch) {
  batch.validate();
  if (batch.size() == 0) throw InvalidArgument("batch is empty");
}

double log_sum_exp_all(const Matrix& m) {
  return log_sum_exp(std::span<const double>(m.data(), static_cast<std::size_t>(m.size())));
}

// Shared body of the tuple-enumerating TCMax forms.
LossResult tcmax_over_tuples(const MultimodalModel& model, const Batch& batch, const TupleIndex& tuples) {
  const std::size_t n = batch.size();
  const std::size_t classes = model.num_classes();
  const auto enc = model.encode(batch);

  const TupleIndex diag = TupleIndex::diagonal(n, model.num_modalities());
  const Matrix positive = model.tuple_logits(enc.z, diag);
  const Matrix negative = model.tuple_logits(enc.z, tuples);

  double mean_positive = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean_positive += positive(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(batch.labels[i]));
  mean_positive /= static_cast<double>(n);
  const double lse = log_sum_exp_all(negative);

  LossResult out;
  out.value = -mean_positive + lse - std::log(static_cast<double>(tuples.size()) * static_cast<double>(classes));
  if (!std::isfinite(out.value)) throw NumericalError("TCMax loss is non-finite");

  Matrix dpos = Matrix::Zero(positive.rows(), positive.cols());
  for (std::size_t i = 0; i < n; ++i)
    dpos(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(batch.labels[i])) = -1.0 / static_cast<double>(n);
  const Matrix dneg = (negative.array() - lse).exp().matrix();

  out.grads = model.zero_gradients();
  auto dz = MultimodalModel::zeros_like(enc.z);
  model.tuple_backward(enc.z, diag, dpos, out.grads, dz);
  model.tuple_backward(enc.z, tuples, dneg, out.grads, dz);
  model.encoder_backward(enc, dz, out.grads);
  return out;
}

}  // namespace

NegativeSampleSet sample_negatives(std::size_t batch_size, std::size_t arity, std::size_t count,
                                   std::uint64_t seed) {
  if (batch_size == 0 || arity == 0) throw InvalidArgument("negative sampling needs a non-empty batch");
  if (count == 0) throw InvalidArgument("negative sample set must be non-empty");
  std::size_t space = 1;
  for (std::size_t m = 0; m < arity; ++m) space *= batch_size;
  count = std::min(count, space);

  Rng rng(seed);
  std::vector<std::size_t> picks;
  picks.reserve(count);
  if (count * 4 >= space) {
    // Dense regime: partial Fisher-Yates over the whole space.
    std::vector<std::size_t> all(space);
    std::iota(all.begin(), all.end(), std::size_t{0});
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng() % (space - i));
      std::swap(all[i], all[j]);
    }
    picks.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(count));
  } else {
    std::vector<bool> taken(space, false);
    while (picks.size() < count) {
      const std::size_t k = static_cast<std::size_t>(rng() % space);
      if (!taken[k]) {
        taken[k] = true;
        picks.push_back(k);
      }
    }
  }

  NegativeSampleSet out;
  out.seed = seed;
  out.tuples.arity = arity;
  out.tuples.flat.resize(count * arity);
  for (std::size_t t = 0; t < count; ++t) {
    std::size_t code = picks[t];
    for (std::size_t m = arity; m-- > 0;) {
      out.tuples.flat[t * arity + m] = code % batch_size;
      code /= batch_size;
    }
  }
  return out;
}

NegativeSampleSet all_negatives(std::size_t batch_size, std::size_t arity) {
  NegativeSampleSet out;
  out.tuples = TupleIndex::all(batch_size, arity);
  return out;
}

LossResult joint_ce_loss(const MultimodalModel& model, const Batch& batch) {
  require_nonempty(batch);
  check_labels(batch, model.num_classes());
  const std::size_t n = batch.size();
  const auto enc = model.encode(batch);
  const TupleIndex diag = TupleIndex::diagonal(n, model.num_modalities());
  const Matrix logits = model.tuple_logits(enc.z, diag);

  LossResult out;
  Matrix dlogits(logits.rows(), logits.cols());
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double lse = log_sum_exp(Vector(logits.row(i).transpose()));
    const auto y = static_cast<Eigen::Index>(batch.labels[static_cast<std::size_t>(i)]);
    total += lse - logits(i, y);
    dlogits.row(i) = (logits.row(i).array() - lse).exp().matrix();
    dlogits(i, y) -= 1.0;
  }
  out.value = total / static_cast<double>(n);
  if (!std::isfinite(out.value)) throw NumericalError("joint cross-entropy is non-finite");
  dlogits /= static_cast<double>(n);

  out.grads = model.zero_gradients();
  auto dz = MultimodalModel::zeros_like(enc.z);
  model.tuple_backward(enc.z, diag, dlogits, out.grads, dz);
  model.encoder_backward(enc, dz, out.grads);
  return out;
}

LossResult unimodal_loss(const MultimodalModel& model, const Batch& batch) {
  if (!model.decomposable()) throw InvalidArgument("unimodal loss needs a linear_sum or shared_linear head");
  require_nonempty(batch);
  check_labels(batch, model.num_classes());
  const std::size_t n = batch.size();
  const auto enc = model.encode(batch);

  LossResult out;
  out.grads = model.zero_gradients();
  auto dz = MultimodalModel::zeros_like(enc.z);
  double total = 0.0;
  for (std::size_t m = 0; m < model.num_modalities(); ++m) {
    const Matrix logits = model.modality_logits(enc.z, m);
    Matrix dlogits(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
      const double lse = log_sum_exp(Vector(logits.row(i).transpose()));
      const auto y = static_cast<Eigen::Index>(batch.labels[static_cast<std::size_t>(i)]);
      total += lse - logits(i, y);
      dlogits.row(i) = (logits.row(i).array() - lse).exp().matrix();
      dlogits(i, y) -= 1.0;
    }
    dlogits /= static_cast<double>(n);
    model.modality_backward(enc.z, m, dlogits, out.grads, dz);
  }
  out.value = total / static_cast<double>(n);
  if (!std::isfinite(out.value)) throw NumericalError("unimodal loss is non-finite");
  model.encoder_backward(enc, dz, out.grads);
  return out;
}

LossResult tcmax_full(const MultimodalModel& model, const Batch& batch) {
  require_nonempty(batch);
  check_labels(batch, model.num_classes());
  if (model.head_kind() == HeadKind::concat_mlp && batch.size() > kMaxFullBatchConcat)
    throw InvalidArgument("tcmax_full with a concat_mlp head is limited to batches of " +
                          std::to_string(kMaxFullBatchConcat) + " samples; use tcmax_sampled");
  return tcmax_over_tuples(model, batch, TupleIndex::all(batch.size(), model.num_modalities()));
}

LossResult tcmax_sampled(const MultimodalModel& model, const Batch& batch, const NegativeSampleSet& negatives) {
  require_nonempty(batch);
  check_labels(batch, model.num_classes());
  if (negatives.size() == 0) throw InvalidArgument("negative sample set is empty");
  if (negatives.tuples.arity != model.num_modalities())
    throw InvalidArgument("negative tuples do not match the number of modalities");
  for (std::size_t idx : negatives.tuples.flat)
    if (idx >= batch.size()) throw InvalidArgument("negative tuple index outside the batch");
  return tcmax_over_tuples(model, batch, negatives.tuples);
}

LossResult tcmax_factored(const MultimodalModel& model, const Batch& batch) {
  if (!model.decomposable()) throw InvalidArgument("factored TCMax needs a linear_sum or shared_linear head");
  require_nonempty(batch);
  check_labels(batch, model.num_classes());
  const std::size_t n = batch.size();
  const std::size_t modalities = model.num_modalities();
  const auto classes = static_cast<Eigen::Index>(model.num_classes());
  const auto enc = model.encode(batch);

  std::vector<Matrix> logits;
  for (std::size_t m = 0; m < modalities; ++m) logits.push_back(model.modality_logits(enc.z, m));

  double mean_positive = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t m = 0; m < modalities; ++m)
      mean_positive += logits[m](static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(batch.labels[i]));
  mean_positive /= static_cast<double>(n);

  // column_lse(m, y) = log sum_j exp L_m[j, y]; the denominator is
  // log sum_y exp(sum_m column_lse(m, y)).
  Matrix column_lse(static_cast<Eigen::Index>(modalities), classes);
  for (std::size_t m = 0; m < modalities; ++m)
    for (Eigen::Index y = 0; y < classes; ++y)
      column_lse(static_cast<Eigen::Index>(m), y) = log_sum_exp(Vector(logits[m].col(y)));
  const Vector per_class = column_lse.colwise().sum().transpose();
  const double lse = log_sum_exp(per_class);

  const double log_count = static_cast<double>(modalities) * std::log(static_cast<double>(n)) +
                           std::log(static_cast<double>(model.num_classes()));
  LossResult out;
  out.value = -mean_positive + lse - log_count;
  if (!std::isfinite(out.value)) throw NumericalError("factored TCMax loss is non-finite");

  const Vector class_weight = (per_class.array() - lse).exp().matrix();
  out.grads = model.zero_gradients();
  auto dz = MultimodalModel::zeros_like(enc.z);
  for (std::size_t m = 0; m < modalities; ++m) {
    Matrix d(logits[m].rows(), logits[m].cols());
    for (Eigen::Index y = 0; y < classes; ++y)
      d.col(y) = class_weight(y) *
                 (logits[m].col(y).array() - column_lse(static_cast<Eigen::Index>(m), y)).exp().matrix();
    for (std::size_t i = 0; i < n; ++i)
      d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(batch.labels[i])) -= 1.0 / static_cast<double>(n);
    model.modality_backward(enc.z, m, d, out.grads, dz);
  }
  model.encoder_backward(enc, dz, out.grads);
  return out;
}

LossResult tcmax_regression(const MultimodalModel& model, const RegressionBatch& batch,
                            const NegativeSampleSet& negatives, const RegressionLossConfig& config) {
  if (!(config.sigma > 0.0)) throw InvalidArgument("sigma must be positive");
  if (model.num_classes() != 2) throw InvalidArgument("regression model must output (y_pred, c_pred)");
  if (batch.size() == 0) throw InvalidArgument("batch is empty");
  if (negatives.size() == 0) throw InvalidArgument("negative sample set is empty");
  for (std::size_t idx : negatives.tuples.flat)
    if (idx >= batch.size()) throw InvalidArgument("negative tuple index outside the batch");

  Batch shaped{batch.inputs, std::vector<std::size_t>(batch.size(), 0)};
  const auto n = static_cast<double>(batch.size());
  const double inv_var = 1.0 / (config.sigma * config.sigma);
  const auto enc = model.encode(shaped);
  const TupleIndex diag = TupleIndex::diagonal(batch.size(), model.num_modalities());
  const Matrix outputs = model.tuple_logits(enc.z, diag);
  const Matrix neg_outputs = model.tuple_logits(enc.z, negatives.tuples);

  const Vector residual = outputs.col(0) - batch.targets;
  const double mse = residual.squaredNorm() / n;
  const double mean_conf = outputs.col(1).sum() / n;
  const Vector neg_conf = neg_outputs.col(1);
  const double lse = log_sum_exp(neg_conf);
  const double confidence_term = -mean_conf + lse - std::log(static_cast<double>(negatives.size()));

  LossResult out;
  out.value = inv_var * mse + config.lambda * confidence_term + std::log(std::sqrt(std::numbers::pi) * config.sigma);
  if (!std::isfinite(out.value)) throw NumericalError("regression TCMax loss is non-finite");

  Matrix dout(outputs.rows(), 2);
  dout.col(0) = (2.0 * inv_var / n) * residual;
  dout.col(1).setConstant(-config.lambda / n);
  Matrix dneg = Matrix::Zero(neg_outputs.rows(), 2);
  dneg.col(1) = config.lambda * (neg_conf.array() - lse).exp().matrix();

  out.grads = model.zero_gradients();
  auto dz = MultimodalModel::zeros_like(enc.z);
  model.tuple_backward(enc.z, diag, dout, out.grads, dz);
  model.tuple_backward(enc.z, negatives.tuples, dneg, out.grads, dz);
  model.encoder_backward(enc, dz, out.grads);
  return out;
}

Matrix predict_batch(const MultimodalModel& model, const std::vector<Matrix>& inputs) {
  if (inputs.empty()) throw InvalidArgument("no inputs");
  Batch batch{inputs, std::vector<std::size_t>(static_cast<std::size_t>(inputs.front().rows()), 0)};
  const auto enc = model.encode(batch);
  return softmax_rows(model.fused_logits(enc.z));
}

std::vector<double> predict(const MultimodalModel& model, const std::vector<Vector>& sample) {
  std::vector<Matrix> inputs;
  for (const auto& x : sample) inputs.push_back(x.transpose());
  const Matrix p = predict_batch(model, inputs);
  return {p.data(), p.data() + p.size()};
}

std::size_t argmax(std::span<const double> values) {
  if (values.empty()) throw InvalidArgument("argmax of an empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

std::size_t argmax_row(const Matrix& m, Eigen::Index row) {
  std::size_t best = 0;
  for (Eigen::Index c = 1; c < m.cols(); ++c)
    if (m(row, c) > m(row, static_cast<Eigen::Index>(best))) best = static_cast<std::size_t>(c);
  return best;
}

}  // namespace tcmax
