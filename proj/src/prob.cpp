#include "tcmax/prob.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "tcmax/error.hpp"

namespace tcmax {
namespace {

std::string shortest(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, end);
}

double plogp(double p) { return p > 0.0 ? p * std::log(p) : 0.0; }

std::vector<std::size_t> strides_of(const std::vector<std::size_t>& sizes) {
  std::vector<std::size_t> strides(sizes.size(), 1);
  for (std::size_t i = sizes.size(); i-- > 1;) strides[i - 1] = strides[i] * sizes[i];
  return strides;
}

void check_categorical(std::span<const double> p, const char* name) {
  double total = 0.0;
  for (double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v))
      throw InvalidArgument(std::string(name) + " has a negative or non-finite entry");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw InvalidArgument(std::string(name) + " sums to " + shortest(total));
}

}  // namespace

// --- VariableSubset ---------------------------------------------------------

VariableSubset::VariableSubset(std::initializer_list<std::size_t> indices) : indices_(indices) {}

VariableSubset::VariableSubset(std::vector<std::size_t> indices) : indices_(std::move(indices)) {}

bool VariableSubset::contains(std::size_t index) const noexcept {
  return std::find(indices_.begin(), indices_.end(), index) != indices_.end();
}

VariableSubset VariableSubset::merged(const VariableSubset& other) const {
  std::vector<std::size_t> out = indices_;
  for (std::size_t i : other.indices_)
    if (!contains(i)) out.push_back(i);
  return VariableSubset(std::move(out));
}

bool VariableSubset::disjoint(const VariableSubset& other) const noexcept {
  return std::none_of(other.indices_.begin(), other.indices_.end(),
                      [this](std::size_t i) { return contains(i); });
}

// --- JointDistribution ------------------------------------------------------

JointDistribution::JointDistribution(std::vector<std::size_t> alphabet_sizes,
                                     std::vector<double> mass)
    : sizes_(std::move(alphabet_sizes)), mass_(std::move(mass)) {
  if (sizes_.empty()) throw InvariantViolation("distribution has no variables");
  std::size_t cells = 1;
  for (std::size_t s : sizes_) {
    if (s == 0) throw InvariantViolation("alphabet sizes must be positive");
    if (cells > kMaxCells / s)
      throw InvariantViolation("product space exceeds " + std::to_string(kMaxCells) + " cells");
    cells *= s;
  }
  if (cells != mass_.size())
    throw InvariantViolation("product of alphabet sizes is " + std::to_string(cells) +
                             " but mass has " + std::to_string(mass_.size()) + " entries");
  double total = 0.0;
  for (std::size_t i = 0; i < mass_.size(); ++i) {
    if (!std::isfinite(mass_[i]) || mass_[i] < 0.0)
      throw InvariantViolation("mass entry " + std::to_string(i) + " is negative or non-finite");
    total += mass_[i];
  }
  if (std::abs(total - 1.0) > kMassTolerance)
    throw InvariantViolation("mass sums to " + shortest(total) + ", expected 1");
}

JointDistribution JointDistribution::uniform(std::vector<std::size_t> alphabet_sizes) {
  std::size_t cells = 1;
  for (std::size_t s : alphabet_sizes) cells *= s;
  return JointDistribution(std::move(alphabet_sizes),
                           std::vector<double>(cells, 1.0 / static_cast<double>(cells)));
}

JointDistribution JointDistribution::point_mass(std::vector<std::size_t> alphabet_sizes,
                                                std::span<const std::size_t> outcome) {
  if (outcome.size() != alphabet_sizes.size())
    throw InvalidArgument("point mass outcome has the wrong number of coordinates");
  std::size_t cells = 1;
  std::size_t index = 0;
  for (std::size_t i = 0; i < alphabet_sizes.size(); ++i) {
    if (outcome[i] >= alphabet_sizes[i]) throw InvalidArgument("outcome coordinate out of range");
    cells *= alphabet_sizes[i];
    index = index * alphabet_sizes[i] + outcome[i];
  }
  std::vector<double> mass(cells, 0.0);
  mass[index] = 1.0;
  return JointDistribution(std::move(alphabet_sizes), std::move(mass));
}

JointDistribution JointDistribution::independent(
    const std::vector<std::vector<double>>& marginals) {
  std::vector<std::size_t> sizes;
  for (const auto& m : marginals) {
    check_categorical(m, "marginal");
    sizes.push_back(m.size());
  }
  std::vector<double> mass{1.0};
  for (const auto& m : marginals) {
    std::vector<double> next;
    next.reserve(mass.size() * m.size());
    for (double a : mass)
      for (double b : m) next.push_back(a * b);
    mass = std::move(next);
  }
  return JointDistribution(std::move(sizes), std::move(mass));
}

JointDistribution JointDistribution::random(std::vector<std::size_t> alphabet_sizes, Rng& rng) {
  std::size_t cells = 1;
  for (std::size_t s : alphabet_sizes) cells *= s;
  std::vector<double> mass(cells);
  for (double& m : mass) m = -std::log1p(-rng.uniform());
  const double total = std::accumulate(mass.begin(), mass.end(), 0.0);
  for (double& m : mass) m /= total;
  // Renormalize once more so the sum is within rounding of 1.
  const double again = std::accumulate(mass.begin(), mass.end(), 0.0);
  for (double& m : mass) m /= again;
  return JointDistribution(std::move(alphabet_sizes), std::move(mass));
}

std::size_t JointDistribution::flat_index(std::span<const std::size_t> outcome) const {
  if (outcome.size() != sizes_.size())
    throw InvalidArgument("outcome has " + std::to_string(outcome.size()) + " coordinates, expected " +
                          std::to_string(sizes_.size()));
  std::size_t index = 0;
  for (std::size_t i = 0; i < sizes_.size(); ++i) {
    if (outcome[i] >= sizes_[i]) throw InvalidArgument("outcome coordinate out of range");
    index = index * sizes_[i] + outcome[i];
  }
  return index;
}

std::vector<std::size_t> JointDistribution::outcome(std::size_t cell) const {
  if (cell >= mass_.size()) throw InvalidArgument("cell index out of range");
  std::vector<std::size_t> out(sizes_.size());
  for (std::size_t i = sizes_.size(); i-- > 0;) {
    out[i] = cell % sizes_[i];
    cell /= sizes_[i];
  }
  return out;
}

// --- Measures ---------------------------------------------------------------

void validate_subset(const JointDistribution& dist, const VariableSubset& vars) {
  const auto& idx = vars.indices();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= dist.num_variables())
      throw InvalidArgument("variable index " + std::to_string(idx[i]) + " out of range for " +
                            std::to_string(dist.num_variables()) + " variables");
    for (std::size_t j = 0; j < i; ++j)
      if (idx[j] == idx[i]) throw InvalidArgument("variable subset has a repeated index");
  }
}

JointDistribution marginalize(const JointDistribution& dist, const VariableSubset& keep) {
  if (keep.empty()) throw InvalidArgument("cannot marginalize onto an empty subset");
  validate_subset(dist, keep);

  const auto& sizes = dist.alphabet_sizes();
  std::vector<std::size_t> out_sizes;
  for (std::size_t v : keep.indices()) out_sizes.push_back(sizes[v]);
  const auto out_strides = strides_of(out_sizes);

  // Stride of each source variable inside the marginal table (0 if summed out).
  std::vector<std::size_t> contrib(sizes.size(), 0);
  for (std::size_t k = 0; k < keep.size(); ++k) contrib[keep.indices()[k]] = out_strides[k];

  std::size_t out_cells = out_sizes.empty() ? 1 : out_strides[0] * out_sizes[0];
  std::vector<double> out(out_cells, 0.0);
  std::vector<std::size_t> counter(sizes.size(), 0);
  std::size_t target = 0;
  for (std::size_t cell = 0; cell < dist.num_cells(); ++cell) {
    out[target] += dist[cell];
    // Odometer increment over the source outcome, keeping `target` in sync.
    for (std::size_t i = sizes.size(); i-- > 0;) {
      if (++counter[i] < sizes[i]) {
        target += contrib[i];
        break;
      }
      target -= contrib[i] * (sizes[i] - 1);
      counter[i] = 0;
    }
  }
  return JointDistribution(std::move(out_sizes), std::move(out));
}

double entropy(const JointDistribution& dist, const VariableSubset& vars) {
  const auto marginal = marginalize(dist, vars);
  double h = 0.0;
  for (double p : marginal.mass()) h -= plogp(p);
  return h;
}

double mutual_information(const JointDistribution& dist, const VariableSubset& a,
                          const VariableSubset& b) {
  if (a.empty() || b.empty()) throw InvalidArgument("mutual information needs non-empty subsets");
  if (!a.disjoint(b)) throw InvalidArgument("mutual information subsets overlap");
  return entropy(dist, a) + entropy(dist, b) - entropy(dist, a.merged(b));
}

double conditional_mutual_information(const JointDistribution& dist, const VariableSubset& a,
                                      const VariableSubset& b, const VariableSubset& c) {
  if (a.empty() || b.empty())
    throw InvalidArgument("conditional mutual information needs non-empty a and b");
  if (c.empty())
    throw InvalidArgument("conditioning set is empty; use mutual_information instead");
  if (!a.disjoint(b) || !a.disjoint(c) || !b.disjoint(c))
    throw InvalidArgument("conditional mutual information subsets overlap");
  return entropy(dist, a.merged(c)) + entropy(dist, b.merged(c)) -
         entropy(dist, a.merged(b).merged(c)) - entropy(dist, c);
}

double total_correlation(const JointDistribution& dist) {
  const std::size_t n = dist.num_variables();
  if (n < 2) throw InvalidArgument("total correlation needs at least 2 variables");
  double sum = 0.0;
  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) {
    sum += entropy(dist, VariableSubset{i});
    all[i] = i;
  }
  return sum - entropy(dist, VariableSubset(std::move(all)));
}

double total_correlation_kl(const JointDistribution& dist) {
  if (dist.num_variables() < 2) throw InvalidArgument("total correlation needs at least 2 variables");
  return kl_divergence(dist, product_of_marginals(dist));
}

JointDistribution product_of_marginals(const JointDistribution& dist) {
  std::vector<std::vector<double>> marginals;
  for (std::size_t i = 0; i < dist.num_variables(); ++i)
    marginals.push_back(marginalize(dist, VariableSubset{i}).mass());
  const auto& sizes = dist.alphabet_sizes();
  std::vector<double> mass(dist.num_cells());
  std::vector<std::size_t> counter(sizes.size(), 0);
  for (std::size_t cell = 0; cell < mass.size(); ++cell) {
    double p = 1.0;
    for (std::size_t i = 0; i < sizes.size(); ++i) p *= marginals[i][counter[i]];
    mass[cell] = p;
    for (std::size_t i = sizes.size(); i-- > 0;) {
      if (++counter[i] < sizes[i]) break;
      counter[i] = 0;
    }
  }
  return JointDistribution(sizes, std::move(mass));
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw InvalidArgument("KL divergence between tables of different size");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    if (q[i] <= 0.0)
      throw InvalidArgument("KL divergence undefined: p is not absolutely continuous w.r.t. q at entry " +
                            std::to_string(i));
    kl += p[i] * std::log(p[i] / q[i]);
  }
  return kl;
}

double kl_divergence(const JointDistribution& p, const JointDistribution& q) {
  if (p.alphabet_sizes() != q.alphabet_sizes())
    throw InvalidArgument("KL divergence between distributions of different shape");
  return kl_divergence(std::span<const double>(p.mass()), std::span<const double>(q.mass()));
}

double js_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw InvalidArgument("JS divergence between categoricals of different length");
  check_categorical(p, "p");
  check_categorical(q, "q");
  std::vector<double> m(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) m[i] = 0.5 * (p[i] + q[i]);
  return 0.5 * kl_divergence(p, m) + 0.5 * kl_divergence(q, m);
}

double categorical_entropy(std::span<const double> p) {
  double h = 0.0;
  for (double v : p) h -= plogp(v);
  return h;
}

JointDistribution gibbs_distribution(std::span<const double> critic, const JointDistribution& base) {
  if (critic.size() != base.num_cells())
    throw InvalidArgument("critic table has " + std::to_string(critic.size()) + " cells, expected " +
                          std::to_string(base.num_cells()));
  double shift = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < critic.size(); ++i) {
    if (base[i] <= 0.0) continue;
    if (!std::isfinite(critic[i]))
      throw InvalidArgument("critic is non-finite at cell " + std::to_string(i));
    shift = std::max(shift, critic[i]);
  }
  std::vector<double> mass(critic.size(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < critic.size(); ++i) {
    if (base[i] <= 0.0) continue;
    mass[i] = base[i] * std::exp(critic[i] - shift);
    total += mass[i];
  }
  for (double& m : mass) m /= total;
  return JointDistribution(base.alphabet_sizes(), std::move(mass));
}

// --- Reference distributions ------------------------------------------------

JointDistribution xor_triple() {
  std::vector<double> mass(8, 0.0);
  for (std::size_t a = 0; a < 2; ++a)
    for (std::size_t v = 0; v < 2; ++v) mass[(a * 2 + v) * 2 + (a ^ v)] = 0.25;
  return JointDistribution({2, 2, 2}, std::move(mass));
}

JointDistribution uniform_copies(std::size_t k, std::size_t copies) {
  std::vector<std::size_t> sizes(copies, k);
  std::size_t cells = 1;
  for (std::size_t s : sizes) cells *= s;
  std::vector<double> mass(cells, 0.0);
  for (std::size_t symbol = 0; symbol < k; ++symbol) {
    std::size_t index = 0;
    for (std::size_t c = 0; c < copies; ++c) index = index * k + symbol;
    mass[index] = 1.0 / static_cast<double>(k);
  }
  return JointDistribution(std::move(sizes), std::move(mass));
}

JointDistribution correlated_bits(double p_agree) {
  if (!(p_agree >= 0.0 && p_agree <= 1.0)) throw InvalidArgument("p_agree must lie in [0, 1]");
  const double same = 0.5 * p_agree;
  const double diff = 0.5 * (1.0 - p_agree);
  return JointDistribution({2, 2}, {same, diff, diff, same});
}

// --- JSON -------------------------------------------------------------------

JointDistribution distribution_from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw InvariantViolation(std::string("distribution file is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("alphabet_sizes") || !doc.contains("mass"))
    throw InvariantViolation("distribution file needs \"alphabet_sizes\" and \"mass\" fields");
  std::vector<std::size_t> sizes;
  std::vector<double> mass;
  try {
    for (const auto& s : doc.at("alphabet_sizes")) {
      if (!s.is_number_integer() || s.get<long long>() <= 0)
        throw InvariantViolation("alphabet sizes must be positive integers");
      sizes.push_back(s.get<std::size_t>());
    }
    for (const auto& m : doc.at("mass")) {
      if (!m.is_number()) throw InvariantViolation("mass entries must be numbers");
      mass.push_back(m.get<double>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvariantViolation(std::string("malformed distribution file: ") + e.what());
  }
  return JointDistribution(std::move(sizes), std::move(mass));
}

std::string distribution_to_json(const JointDistribution& dist) {
  nlohmann::json doc;
  doc["alphabet_sizes"] = dist.alphabet_sizes();
  doc["mass"] = dist.mass();
  return doc.dump();
}

JointDistribution load_distribution(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open distribution file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return distribution_from_json(buf.str());
}

}  // namespace tcmax
