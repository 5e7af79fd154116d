#include "tcmax/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <string>

#include "tcmax/error.hpp"
#include "tcmax/format.hpp"

namespace tcmax {
namespace {

std::size_t cells_of(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t s : shape) n *= s;
  return n;
}

std::size_t flat_of(const std::vector<std::size_t>& shape, std::span<const std::size_t> outcome) {
  if (outcome.size() != shape.size()) throw InvalidArgument("outcome arity does not match critic shape");
  std::size_t index = 0;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (outcome[i] >= shape[i]) throw InvalidArgument("outcome coordinate out of range");
    index = index * shape[i] + outcome[i];
  }
  return index;
}

std::size_t search_cdf(const std::vector<double>& cdf, double u) {
  const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
  return std::min(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
}

}  // namespace

// --- Critics ----------------------------------------------------------------

TabularCritic TabularCritic::constant(std::vector<std::size_t> shape, double value) {
  const std::size_t n = cells_of(shape);
  return {std::move(shape), std::vector<double>(n, value)};
}

TabularCritic TabularCritic::log_ratio(const JointDistribution& p, const JointDistribution& q, double offset,
                                       double off_support) {
  if (p.alphabet_sizes() != q.alphabet_sizes()) throw InvalidArgument("log-ratio critic needs equal shapes");
  TabularCritic t{p.alphabet_sizes(), std::vector<double>(p.num_cells())};
  for (std::size_t i = 0; i < p.num_cells(); ++i) {
    if (p[i] > 0.0 && q[i] <= 0.0) throw InvalidArgument("p is not absolutely continuous with respect to q");
    t.values[i] = (p[i] > 0.0 ? std::log(p[i] / q[i]) : off_support) + offset;
  }
  return t;
}

double TabularCritic::operator()(std::span<const std::size_t> outcome) const {
  return values[flat_of(shape, outcome)];
}

NeuralCritic NeuralCritic::create(std::vector<std::size_t> alphabet_sizes, std::vector<std::size_t> hidden,
                                  Activation activation, std::uint64_t seed) {
  NeuralCritic c;
  c.alphabet_sizes = std::move(alphabet_sizes);
  std::vector<std::size_t> widths{c.encoded_width()};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(1);
  Rng rng(seed);
  c.net = DenseNet::glorot(std::move(widths), activation, rng);
  return c;
}

std::size_t NeuralCritic::encoded_width() const {
  return std::accumulate(alphabet_sizes.begin(), alphabet_sizes.end(), std::size_t{0});
}

Matrix NeuralCritic::encode(std::span<const Outcome> outcomes) const {
  Matrix x = Matrix::Zero(static_cast<Eigen::Index>(outcomes.size()), static_cast<Eigen::Index>(encoded_width()));
  for (std::size_t r = 0; r < outcomes.size(); ++r) {
    if (outcomes[r].size() != alphabet_sizes.size()) throw InvalidArgument("outcome arity does not match critic");
    std::size_t offset = 0;
    for (std::size_t v = 0; v < alphabet_sizes.size(); ++v) {
      if (outcomes[r][v] >= alphabet_sizes[v]) throw InvalidArgument("outcome coordinate out of range");
      x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(offset + outcomes[r][v])) = 1.0;
      offset += alphabet_sizes[v];
    }
  }
  return x;
}

std::vector<double> evaluate_critic(const Critic& critic, std::span<const Outcome> outcomes) {
  if (const auto* table = std::get_if<TabularCritic>(&critic)) {
    std::vector<double> out;
    out.reserve(outcomes.size());
    for (const auto& o : outcomes) out.push_back((*table)(o));
    return out;
  }
  const auto& neural = std::get<NeuralCritic>(critic);
  if (neural.net.input_width() != neural.encoded_width())
    throw InvalidArgument("neural critic input width does not match the outcome encoding");
  const Matrix t = neural.net.forward(neural.encode(outcomes));
  return {t.data(), t.data() + t.size()};
}

// --- Bounds -----------------------------------------------------------------

DvEstimate dv_bound_exact(const TabularCritic& critic, const JointDistribution& joint) {
  if (critic.shape != joint.alphabet_sizes() || critic.values.size() != joint.num_cells())
    throw InvalidArgument("critic shape does not match the distribution");
  const auto product = product_of_marginals(joint);
  DvEstimate est;
  std::vector<double> shifted;
  shifted.reserve(joint.num_cells());
  for (std::size_t i = 0; i < joint.num_cells(); ++i) {
    if (product[i] > 0.0 && !std::isfinite(critic.values[i]))
      throw InvalidArgument("critic value is non-finite at cell " + std::to_string(i));
    if (joint[i] > 0.0) {
      est.joint_term += joint[i] * critic.values[i];
      ++est.joint_count;
    }
    if (product[i] > 0.0) {
      shifted.push_back(critic.values[i] + std::log(product[i]));
      ++est.product_count;
    }
  }
  est.product_term = log_sum_exp(shifted);
  est.lower_bound = est.joint_term - est.product_term;
  return est;
}

DvEstimate dv_bound_sampled(const Critic& critic, std::span<const Outcome> joint_samples,
                            std::span<const Outcome> product_samples) {
  if (joint_samples.empty() || product_samples.empty()) throw InvalidArgument("DV bound needs non-empty sample lists");
  const auto tj = evaluate_critic(critic, joint_samples);
  const auto tp = evaluate_critic(critic, product_samples);
  DvEstimate est;
  est.joint_count = tj.size();
  est.product_count = tp.size();
  est.joint_term = std::accumulate(tj.begin(), tj.end(), 0.0) / static_cast<double>(tj.size());
  est.product_term = log_sum_exp(tp) - std::log(static_cast<double>(tp.size()));
  est.lower_bound = est.joint_term - est.product_term;
  return est;
}

// --- Tabular fit ------------------------------------------------------------

TabularFit tcne_fit_tabular(const JointDistribution& joint, std::size_t iterations, double learning_rate) {
  if (joint.num_cells() > kMaxTabularFitCells)
    throw InvalidArgument("tabular fit is limited to " + std::to_string(kMaxTabularFitCells) + " cells");
  if (!(learning_rate > 0.0)) throw InvalidArgument("learning rate must be positive");
  const auto product = product_of_marginals(joint);

  TabularFit fit{TabularCritic::constant(joint.alphabet_sizes(), 0.0), {}};
  fit.trace.reserve(iterations + 1);
  fit.trace.push_back(dv_bound_exact(fit.critic, joint));
  for (std::size_t it = 1; it <= iterations; ++it) {
    const auto gibbs = gibbs_distribution(fit.critic.values, product);
    for (std::size_t i = 0; i < joint.num_cells(); ++i) {
      if (product[i] <= 0.0) continue;
      fit.critic.values[i] += learning_rate * (joint[i] - gibbs[i]);
    }
    fit.trace.push_back(dv_bound_exact(fit.critic, joint));
    if (!std::isfinite(fit.trace.back().lower_bound)) throw NumericalError("DV objective is non-finite", it);
  }
  return fit;
}

// --- Sampling ---------------------------------------------------------------

TupleSource::TupleSource(JointDistribution dist, std::uint64_t seed) : dist_(std::move(dist)), rng_(seed) {
  cdf_.resize(dist_.num_cells());
  std::partial_sum(dist_.mass().begin(), dist_.mass().end(), cdf_.begin());
  for (std::size_t v = 0; v < dist_.num_variables(); ++v) {
    const auto marginal = marginalize(dist_, VariableSubset{v});
    std::vector<double> c(marginal.num_cells());
    std::partial_sum(marginal.mass().begin(), marginal.mass().end(), c.begin());
    marginal_cdfs_.push_back(std::move(c));
  }
}

std::size_t TupleSource::draw_cell() {
  std::size_t cell = search_cdf(cdf_, rng_.uniform() * cdf_.back());
  // Never return a zero-mass cell (possible only through rounding at the ends).
  while (dist_[cell] <= 0.0 && cell > 0) --cell;
  while (dist_[cell] <= 0.0) ++cell;
  return cell;
}

std::vector<Outcome> TupleSource::draw(std::size_t count) {
  std::vector<Outcome> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(dist_.outcome(draw_cell()));
  return out;
}

std::vector<Outcome> TupleSource::draw_product(std::size_t count) {
  std::vector<Outcome> out(count, Outcome(dist_.num_variables()));
  for (auto& o : out)
    for (std::size_t v = 0; v < o.size(); ++v) {
      const auto& c = marginal_cdfs_[v];
      o[v] = search_cdf(c, rng_.uniform() * c.back());
    }
  return out;
}

// --- Neural fit -------------------------------------------------------------

std::vector<DvEstimate> tcne_fit_neural(TupleSource& source, NeuralCritic& critic, const NeuralFitConfig& config) {
  if (critic.alphabet_sizes != source.distribution().alphabet_sizes())
    throw InvalidArgument("critic alphabet sizes do not match the sampler");
  if (critic.net.input_width() != critic.encoded_width())
    throw InvalidArgument("critic input width does not match the outcome encoding");
  if (critic.net.output_width() != 1) throw InvalidArgument("critic must output a single value");
  if (config.batch_size == 0) throw InvalidArgument("batch size must be positive");

  OptimizerState opt(config.learning_rate, config.momentum, 0.0);
  Rng shuffle_rng = Rng(config.seed).split(7);
  const auto n = static_cast<double>(config.batch_size);
  const std::size_t vars = critic.alphabet_sizes.size();
  double ema = -1.0;

  std::vector<DvEstimate> trace;
  trace.reserve(config.iterations);
  std::vector<std::size_t> perm(config.batch_size);
  for (std::size_t it = 0; it < config.iterations; ++it) {
    const auto joint = source.draw(config.batch_size);
    std::vector<Outcome> product = joint;
    for (std::size_t v = 0; v < vars; ++v) {
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      std::shuffle(perm.begin(), perm.end(), shuffle_rng);
      for (std::size_t i = 0; i < perm.size(); ++i) product[i][v] = joint[perm[i]][v];
    }

    const auto tape_joint = critic.net.forward_tape(critic.encode(joint));
    const auto tape_prod = critic.net.forward_tape(critic.encode(product));
    const Vector tj = tape_joint.activations.back().col(0);
    const Vector tp = tape_prod.activations.back().col(0);

    DvEstimate est;
    est.joint_count = est.product_count = config.batch_size;
    est.joint_term = tj.mean();
    const double lse = log_sum_exp(tp);
    est.product_term = lse - std::log(n);
    est.lower_bound = est.joint_term - est.product_term;
    if (!std::isfinite(est.lower_bound)) throw NumericalError("neural DV estimate is non-finite", it);
    trace.push_back(est);

    // Descent on the negated bound.
    Matrix dj = Matrix::Constant(tj.size(), 1, -1.0 / n);
    Matrix dp(tp.size(), 1);
    if (config.ema_correction) {
      const double batch_mean = std::exp(est.product_term);
      ema = ema < 0.0 ? batch_mean : config.ema_decay * ema + (1.0 - config.ema_decay) * batch_mean;
      dp.col(0) = tp.array().exp().matrix() / (n * ema);
    } else {
      dp.col(0) = (tp.array() - lse).exp().matrix();
    }
    GradientSet grads = GradientSet::zeros_like(std::span<const Matrix>(critic.net.parameters()));
    critic.net.backward(tape_joint, dj, grads.arrays);
    critic.net.backward(tape_prod, dp, grads.arrays);
    if (!grads.all_finite()) throw NumericalError("neural critic gradient is non-finite", it);
    sgd_step(critic.net, grads, opt);
  }
  return trace;
}

double smoothed_estimate(std::span<const DvEstimate> trace) {
  if (trace.empty()) throw InvalidArgument("empty trace");
  const std::size_t tail = std::max<std::size_t>(1, trace.size() / 10);
  double total = 0.0;
  for (std::size_t i = trace.size() - tail; i < trace.size(); ++i) total += trace[i].lower_bound;
  return total / static_cast<double>(tail);
}

void write_trace_csv(std::ostream& out, std::span<const DvEstimate> trace) {
  out << "iter,joint_term,product_term,lower_bound\n";
  for (std::size_t i = 0; i < trace.size(); ++i)
    out << i << ',' << format_number(trace[i].joint_term) << ',' << format_number(trace[i].product_term) << ','
        << format_number(trace[i].lower_bound) << '\n';
}

std::vector<Outcome> exact_frequency_outcomes(const JointDistribution& dist, std::size_t total) {
  std::vector<Outcome> out;
  std::size_t placed = 0;
  for (std::size_t i = 0; i < dist.num_cells(); ++i) {
    const double scaled = dist[i] * static_cast<double>(total);
    const double count = std::round(scaled);
    if (std::abs(scaled - count) > 1e-9)
      throw InvalidArgument("mass of cell " + std::to_string(i) + " is not a multiple of 1/" + std::to_string(total));
    for (std::size_t k = 0; k < static_cast<std::size_t>(count); ++k) out.push_back(dist.outcome(i));
    placed += static_cast<std::size_t>(count);
  }
  if (placed != total) throw InvalidArgument("exact-frequency expansion does not add up");
  return out;
}

}  // namespace tcmax
