#pragma once

// Exact information measures on dense finite joint distributions.
//
// All quantities are in nats. 0 log 0 is taken to be 0. These routines are the
// ground truth that every estimator and loss in the project is checked against.

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "tcmax/rng.hpp"

namespace tcmax {

/// Largest product space accepted by JointDistribution.
inline constexpr std::size_t kMaxCells = 1'000'000;

/// Tolerance on the total mass of a distribution.
inline constexpr double kMassTolerance = 1e-12;

/// Ordered set of variable indices into a JointDistribution.
class VariableSubset {
 public:
  VariableSubset() = default;
  VariableSubset(std::initializer_list<std::size_t> indices);
  explicit VariableSubset(std::vector<std::size_t> indices);

  const std::vector<std::size_t>& indices() const noexcept { return indices_; }
  std::size_t size() const noexcept { return indices_.size(); }
  bool empty() const noexcept { return indices_.empty(); }
  bool contains(std::size_t index) const noexcept;

  /// Union preserving the order of `*this` followed by new indices of `other`.
  VariableSubset merged(const VariableSubset& other) const;
  bool disjoint(const VariableSubset& other) const noexcept;

 private:
  std::vector<std::size_t> indices_;
};

/// Dense probability table over a finite product space, row-major (the last
/// variable varies fastest). By convention the label is the last variable.
class JointDistribution {
 public:
  /// Validates every invariant; throws InvariantViolation naming the first one
  /// that fails.
  JointDistribution(std::vector<std::size_t> alphabet_sizes, std::vector<double> mass);

  static JointDistribution uniform(std::vector<std::size_t> alphabet_sizes);
  static JointDistribution point_mass(std::vector<std::size_t> alphabet_sizes,
                                      std::span<const std::size_t> outcome);
  /// Product of independent categorical marginals.
  static JointDistribution independent(const std::vector<std::vector<double>>& marginals);
  /// Random table with Dirichlet(1)-like mass.
  static JointDistribution random(std::vector<std::size_t> alphabet_sizes, Rng& rng);

  const std::vector<std::size_t>& alphabet_sizes() const noexcept { return sizes_; }
  const std::vector<double>& mass() const noexcept { return mass_; }
  std::size_t num_variables() const noexcept { return sizes_.size(); }
  std::size_t num_cells() const noexcept { return mass_.size(); }

  double operator[](std::size_t cell) const { return mass_[cell]; }
  double at(std::span<const std::size_t> outcome) const { return mass_[flat_index(outcome)]; }

  std::size_t flat_index(std::span<const std::size_t> outcome) const;
  std::vector<std::size_t> outcome(std::size_t cell) const;

 private:
  std::vector<std::size_t> sizes_;
  std::vector<double> mass_;
};

/// Checks that every index of `vars` refers to a variable of `dist` and that
/// indices are distinct. Throws InvalidArgument otherwise.
void validate_subset(const JointDistribution& dist, const VariableSubset& vars);

/// Marginal over `keep`, with variables in the order listed by `keep`.
JointDistribution marginalize(const JointDistribution& dist, const VariableSubset& keep);

double entropy(const JointDistribution& dist, const VariableSubset& vars);
double mutual_information(const JointDistribution& dist, const VariableSubset& a,
                          const VariableSubset& b);
/// I(a; b | c). `c` must be non-empty; use mutual_information otherwise.
double conditional_mutual_information(const JointDistribution& dist, const VariableSubset& a,
                                      const VariableSubset& b, const VariableSubset& c);

/// Sum of marginal entropies minus the joint entropy.
double total_correlation(const JointDistribution& dist);
/// KL divergence from the joint to the product of its marginals.
double total_correlation_kl(const JointDistribution& dist);

JointDistribution product_of_marginals(const JointDistribution& dist);

/// KL(p || q). Throws InvalidArgument when shapes differ or p is not absolutely
/// continuous with respect to q.
double kl_divergence(const JointDistribution& p, const JointDistribution& q);
double kl_divergence(std::span<const double> p, std::span<const double> q);

/// Jensen-Shannon divergence between two categoricals; lies in [0, ln 2].
double js_divergence(std::span<const double> p, std::span<const double> q);

/// Shannon entropy of a categorical.
double categorical_entropy(std::span<const double> p);

/// dG = e^T / E_base[e^T] d(base), with T given as one value per cell.
JointDistribution gibbs_distribution(std::span<const double> critic, const JointDistribution& base);

// Reference distributions used throughout the tests and the verify command.

/// (a, v, y) with a, v uniform bits and y = a xor v.
JointDistribution xor_triple();
/// `copies` identical copies of a variable uniform over `k` symbols.
JointDistribution uniform_copies(std::size_t k, std::size_t copies);
/// Two bits that agree with probability `p_agree`, each uniform.
JointDistribution correlated_bits(double p_agree);

// JSON distribution files: {"alphabet_sizes": [...], "mass": [...]}.
JointDistribution distribution_from_json(const std::string& text);
std::string distribution_to_json(const JointDistribution& dist);
JointDistribution load_distribution(const std::string& path);

}  // namespace tcmax
