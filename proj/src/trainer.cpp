#include "tcmax/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include "tcmax/error.hpp"
#include "tcmax/format.hpp"
#include "tcmax/prob.hpp"

namespace tcmax {

Strategy strategy_from_string(const std::string& name) {
  if (name == "joint") return Strategy::joint;
  if (name == "shared_head") return Strategy::shared_head;
  if (name == "unimodal") return Strategy::unimodal;
  if (name == "tcmax_full") return Strategy::tcmax_full;
  if (name == "tcmax_sampled") return Strategy::tcmax_sampled;
  if (name == "tcmax_factored") return Strategy::tcmax_factored;
  throw ConfigError("unknown strategy '" + name +
                    "' (expected joint, shared_head, unimodal, tcmax_full, tcmax_sampled or tcmax_factored)");
}

std::string to_string(Strategy strategy) {
  switch (strategy) {
    case Strategy::joint: return "joint";
    case Strategy::shared_head: return "shared_head";
    case Strategy::unimodal: return "unimodal";
    case Strategy::tcmax_full: return "tcmax_full";
    case Strategy::tcmax_sampled: return "tcmax_sampled";
    case Strategy::tcmax_factored: return "tcmax_factored";
  }
  return "?";
}

bool is_tcmax(Strategy s) noexcept {
  return s == Strategy::tcmax_full || s == Strategy::tcmax_sampled || s == Strategy::tcmax_factored;
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (eval_every == 0) throw ConfigError("eval_every must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
  if (strategy == Strategy::tcmax_sampled && negatives == 0)
    throw ConfigError("tcmax_sampled needs a positive negatives count");
  if (strategy != Strategy::tcmax_sampled && negatives != 0)
    throw ConfigError("negatives applies only to tcmax_sampled");
}

void TrainConfig::check_compatible(const MultimodalModel& model) const {
  switch (strategy) {
    case Strategy::shared_head:
      if (model.head_kind() != HeadKind::shared_linear) throw ConfigError("shared_head strategy needs a shared_linear head");
      break;
    case Strategy::unimodal:
    case Strategy::tcmax_factored:
      if (!model.decomposable())
        throw ConfigError(to_string(strategy) + " needs a linear_sum or shared_linear head");
      break;
    case Strategy::tcmax_full:
      if (model.head_kind() == HeadKind::concat_mlp && batch_size > kMaxFullBatchConcat)
        throw ConfigError("tcmax_full with a concat_mlp head is limited to batch_size " +
                          std::to_string(kMaxFullBatchConcat));
      break;
    default:
      break;
  }
}

LossResult strategy_loss(const MultimodalModel& model, const Batch& batch, const TrainConfig& config,
                         std::uint64_t step_seed) {
  switch (config.strategy) {
    case Strategy::joint:
    case Strategy::shared_head:
      return joint_ce_loss(model, batch);
    case Strategy::unimodal:
      return unimodal_loss(model, batch);
    case Strategy::tcmax_full:
      return tcmax_full(model, batch);
    case Strategy::tcmax_sampled:
      return tcmax_sampled(model, batch,
                           sample_negatives(batch.size(), model.num_modalities(), config.negatives, step_seed));
    case Strategy::tcmax_factored:
      return tcmax_factored(model, batch);
  }
  throw ConfigError("unhandled strategy");
}

TrainResult train(MultimodalModel model, const LabeledDataset& dataset, const TrainConfig& config) {
  config.validate();
  config.check_compatible(model);
  const std::size_t n = dataset.train.size();
  if (n == 0) throw InvalidArgument("training split is empty");

  OptimizerState opt(config.learning_rate, config.momentum, config.weight_decay);
  const Rng root(config.seed);
  TrainResult result;
  std::vector<std::size_t> order(n);
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng = root.split(epoch);
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0.0;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < n; start += config.batch_size, ++steps) {
      const std::size_t stop = std::min(n, start + config.batch_size);
      const Batch batch = dataset.train.select(std::span<const std::size_t>(order).subspan(start, stop - start));
      const std::uint64_t step_seed = root.split(epoch).split(steps + 1)();
      LossResult loss;
      try {
        loss = strategy_loss(model, batch, config, step_seed);
      } catch (const NumericalError& e) {
        throw NumericalError(std::string("training diverged: ") + e.what(), epoch, "epoch");
      }
      if (!std::isfinite(loss.value) || !loss.grads.all_finite())
        throw NumericalError("non-finite training loss", epoch, "epoch");
      loss_sum += loss.value;
      auto params = model.parameters();
      sgd_step(params, loss.grads, opt);
    }

    if (epoch % config.eval_every == 0 || epoch == config.epochs) {
      EpochRecord rec;
      rec.epoch = epoch;
      rec.train_loss = loss_sum / static_cast<double>(steps);
      rec.metrics = evaluate(model, dataset.test);
      if (is_tcmax(config.strategy)) rec.tc_lower_bound = -rec.train_loss;
      result.records.push_back(std::move(rec));
    }
  }
  result.model = std::move(model);
  return result;
}

EvalMetrics evaluate(const MultimodalModel& model, const Batch& split) {
  if (split.size() == 0) throw InvalidArgument("evaluation split is empty");
  const auto enc = model.encode(split);
  const std::size_t n = split.size();
  const std::size_t modalities = model.num_modalities();

  EvalMetrics out;
  const Matrix fused = softmax_rows(model.fused_logits(enc.z));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) correct += argmax_row(fused, static_cast<Eigen::Index>(i)) == split.labels[i];
  out.multi_accuracy = static_cast<double>(correct) / static_cast<double>(n);

  std::vector<Matrix> probs;
  for (std::size_t m = 0; m < modalities; ++m) {
    probs.push_back(softmax_rows(model.modality_logits(enc.z, m)));
    std::size_t hits = 0;
    double entropy_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      hits += argmax_row(probs.back(), r) == split.labels[i];
      const Vector row = probs.back().row(r).transpose();
      entropy_sum += categorical_entropy(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())));
    }
    out.modality_accuracy.push_back(static_cast<double>(hits) / static_cast<double>(n));
    out.modality_entropy.push_back(entropy_sum / static_cast<double>(n));
  }

  double js_sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < modalities; ++a)
    for (std::size_t b = a + 1; b < modalities; ++b, ++pairs)
      for (std::size_t i = 0; i < n; ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        const Vector pa = probs[a].row(r).transpose();
        const Vector pb = probs[b].row(r).transpose();
        js_sum += js_divergence(std::span<const double>(pa.data(), static_cast<std::size_t>(pa.size())),
                                std::span<const double>(pb.data(), static_cast<std::size_t>(pb.size())));
      }
  out.js_divergence = pairs == 0 ? 0.0 : js_sum / static_cast<double>(pairs * n);

  // Strong = most accurate modality (lowest index on ties); weak = least
  // accurate of the rest.
  out.strong_modality = static_cast<std::size_t>(
      std::max_element(out.modality_accuracy.begin(), out.modality_accuracy.end()) - out.modality_accuracy.begin());
  out.weak_modality = out.strong_modality;
  for (std::size_t m = 0; m < modalities; ++m) {
    if (m == out.strong_modality) continue;
    if (out.weak_modality == out.strong_modality || out.modality_accuracy[m] < out.modality_accuracy[out.weak_modality])
      out.weak_modality = m;
  }
  const double h_strong = out.modality_entropy[out.strong_modality];
  const double h_weak = out.modality_entropy[out.weak_modality];
  if (h_strong > 0.0)
    out.entropy_ratio = h_weak / h_strong;
  else
    out.entropy_ratio = h_weak > 0.0 ? std::numeric_limits<double>::infinity() : 1.0;
  return out;
}

double linear_probe_accuracy(const Matrix& train_x, std::span<const std::size_t> train_y, const Matrix& test_x,
                             std::span<const std::size_t> test_y, std::size_t num_classes, std::uint64_t seed) {
  if (train_x.rows() != static_cast<Eigen::Index>(train_y.size()) ||
      test_x.rows() != static_cast<Eigen::Index>(test_y.size()))
    throw InvalidArgument("probe features and labels are misaligned");
  if (test_y.empty() || train_y.empty()) throw InvalidArgument("probe needs non-empty splits");
  Rng rng(seed);
  DenseNet probe = DenseNet::glorot({static_cast<std::size_t>(train_x.cols()), num_classes}, Activation::relu, rng);
  OptimizerState opt(0.1, 0.9, 0.0);
  const auto n = static_cast<double>(train_y.size());
  for (int step = 0; step < 300; ++step) {
    const auto tape = probe.forward_tape(train_x);
    Matrix d = softmax_rows(tape.activations.back());
    for (std::size_t i = 0; i < train_y.size(); ++i) d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(train_y[i])) -= 1.0;
    d /= n;
    GradientSet g = GradientSet::zeros_like(std::span<const Matrix>(probe.parameters()));
    probe.backward(tape, d, g.arrays);
    sgd_step(probe, g, opt);
  }
  const Matrix logits = probe.forward(test_x);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < test_y.size(); ++i) hits += argmax_row(logits, static_cast<Eigen::Index>(i)) == test_y[i];
  return static_cast<double>(hits) / static_cast<double>(test_y.size());
}

void write_records_csv(std::ostream& out, std::span<const EpochRecord> records) {
  const std::size_t modalities = records.empty() ? 0 : records.front().metrics.modality_accuracy.size();
  out << "epoch,train_loss,multi_acc";
  for (std::size_t m = 0; m < modalities; ++m) out << ",acc_m" << m;
  out << ",js_divergence";
  for (std::size_t m = 0; m < modalities; ++m) out << ",entropy_m" << m;
  out << ",entropy_ratio,strong_modality,tc_lower_bound\n";
  for (const auto& r : records) {
    out << r.epoch << ',' << format_number(r.train_loss) << ',' << format_number(r.metrics.multi_accuracy);
    for (double a : r.metrics.modality_accuracy) out << ',' << format_number(a);
    out << ',' << format_number(r.metrics.js_divergence);
    for (double h : r.metrics.modality_entropy) out << ',' << format_number(h);
    out << ',' << format_number(r.metrics.entropy_ratio) << ',' << r.metrics.strong_modality << ',';
    if (r.tc_lower_bound) out << format_number(*r.tc_lower_bound);
    out << '\n';
  }
}

}  // namespace tcmax
