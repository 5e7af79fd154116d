#pragma once

// Donsker-Varadhan lower bounds on total correlation.
//
// For any critic T on the product space,
//   TC >= E_P[T] - log E_Q[e^T],   Q = product of the marginals of P,
// with equality iff T = log(dP/dQ) + const.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <variant>
#include <vector>

#include "tcmax/nn.hpp"
#include "tcmax/prob.hpp"
#include "tcmax/rng.hpp"

namespace tcmax {

using Outcome = std::vector<std::size_t>;

/// One real value per cell of the product space, row-major like JointDistribution.
struct TabularCritic {
  std::vector<std::size_t> shape;
  std::vector<double> values;

  static TabularCritic constant(std::vector<std::size_t> shape, double value);
  /// log(p / q) on the support of p, `off_support` elsewhere, plus `offset`.
  static TabularCritic log_ratio(const JointDistribution& p, const JointDistribution& q, double offset = 0.0,
                                 double off_support = -1000.0);
  double operator()(std::span<const std::size_t> outcome) const;
};

/// Dense net over the concatenated one-hot encodings of an outcome.
struct NeuralCritic {
  DenseNet net;
  std::vector<std::size_t> alphabet_sizes;

  static NeuralCritic create(std::vector<std::size_t> alphabet_sizes, std::vector<std::size_t> hidden,
                             Activation activation, std::uint64_t seed);
  std::size_t encoded_width() const;
  Matrix encode(std::span<const Outcome> outcomes) const;
};

using Critic = std::variant<TabularCritic, NeuralCritic>;

struct DvEstimate {
  double lower_bound = 0.0;   // joint_term - product_term
  double joint_term = 0.0;    // mean of T under the joint
  double product_term = 0.0;  // log mean of e^T under the product
  std::size_t joint_count = 0;
  std::size_t product_count = 0;
};

/// Exact bound by summation over every cell.
DvEstimate dv_bound_exact(const TabularCritic& critic, const JointDistribution& joint);

/// Monte-Carlo bound from explicit joint and product samples.
DvEstimate dv_bound_sampled(const Critic& critic, std::span<const Outcome> joint_samples,
                            std::span<const Outcome> product_samples);

/// Critic values at each outcome.
std::vector<double> evaluate_critic(const Critic& critic, std::span<const Outcome> outcomes);

/// Largest product space accepted by tcne_fit_tabular.
inline constexpr std::size_t kMaxTabularFitCells = 10'000;

struct TabularFit {
  TabularCritic critic;
  std::vector<DvEstimate> trace;  // trace[0] is the initial (zero) critic
};

/// Full-batch gradient ascent on the exact DV objective over a tabular
/// critic. The gradient with respect to cell x is p(x) - G(x), G the Gibbs
/// distribution of the current critic.
TabularFit tcne_fit_tabular(const JointDistribution& joint, std::size_t iterations, double learning_rate);

/// Seeded i.i.d. sampler of outcomes of a JointDistribution.
class TupleSource {
 public:
  TupleSource(JointDistribution dist, std::uint64_t seed);

  std::vector<Outcome> draw(std::size_t count);
  /// Outcomes whose coordinates are drawn independently from the marginals.
  std::vector<Outcome> draw_product(std::size_t count);

  const JointDistribution& distribution() const noexcept { return dist_; }
  Rng& rng() noexcept { return rng_; }

 private:
  std::size_t draw_cell();

  JointDistribution dist_;
  std::vector<double> cdf_;
  std::vector<std::vector<double>> marginal_cdfs_;
  Rng rng_;
};

struct NeuralFitConfig {
  std::size_t iterations = 3000;
  std::size_t batch_size = 256;
  double learning_rate = 0.01;
  double momentum = 0.9;
  /// Moving-average denominator for the product-term gradient. Off by default,
  /// which follows the plain DV objective.
  bool ema_correction = false;
  double ema_decay = 0.99;
  std::uint64_t seed = 0;
};

/// Minibatch gradient ascent on the sampled DV bound. Product samples are
/// formed by permuting each coordinate of the joint minibatch independently.
/// Returns the per-iteration minibatch estimates (taken before each update).
std::vector<DvEstimate> tcne_fit_neural(TupleSource& source, NeuralCritic& critic, const NeuralFitConfig& config);

/// Mean lower bound over the last 10% of a trace (at least one point).
double smoothed_estimate(std::span<const DvEstimate> trace);

/// CSV with header: iter,joint_term,product_term,lower_bound
void write_trace_csv(std::ostream& out, std::span<const DvEstimate> trace);

/// Every cell repeated round(mass * total) times. Throws when some mass is not
/// an integer multiple of 1/total.
std::vector<Outcome> exact_frequency_outcomes(const JointDistribution& dist, std::size_t total);

}  // namespace tcmax
