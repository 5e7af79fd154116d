#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "tcmax/error.hpp"
#include "tcmax/prob.hpp"

using namespace tcmax;

namespace {

const double kLn2 = std::numbers::ln2;

JointDistribution random_dist(Rng& rng, std::size_t min_vars = 3, std::size_t max_vars = 4) {
  std::vector<std::size_t> sizes(std::uniform_int_distribution<std::size_t>(min_vars, max_vars)(rng));
  for (auto& s : sizes) s = std::uniform_int_distribution<std::size_t>(2, 4)(rng);
  return JointDistribution::random(std::move(sizes), rng);
}

std::vector<long double> widen(const std::vector<double>& v) { return {v.begin(), v.end()}; }

}  // namespace

TEST_SUITE("joint distribution") {
  TEST_CASE("constructor enforces its invariants") {
    CHECK_NOTHROW(JointDistribution({2, 2}, {0.25, 0.25, 0.25, 0.25}));
    CHECK_THROWS_AS(JointDistribution({2, 2}, {0.5, 0.5, 0.5}), InvariantViolation);
    CHECK_THROWS_AS(JointDistribution({2, 0}, {}), InvariantViolation);
    CHECK_THROWS_AS(JointDistribution({}, {}), InvariantViolation);
    CHECK_THROWS_AS(JointDistribution({2}, {1.5, -0.5}), InvariantViolation);
    CHECK_THROWS_AS(JointDistribution({2}, {NAN, 1.0}), InvariantViolation);
    CHECK_THROWS_WITH_AS(JointDistribution({2}, {0.5, 0.4}), "mass sums to 0.9, expected 1", InvariantViolation);
  }

  TEST_CASE("mass tolerance is 1e-12") {
    CHECK_NOTHROW(JointDistribution({2}, {0.5, 0.5 + 5e-13}));
    CHECK_THROWS_AS(JointDistribution({2}, {0.5, 0.5 + 1e-10}), InvariantViolation);
  }

  TEST_CASE("flat index is row-major with the last variable fastest") {
    const auto d = JointDistribution::uniform({2, 3, 4});
    const std::vector<std::size_t> o{1, 2, 3};
    CHECK(d.flat_index(o) == 1 * 12 + 2 * 4 + 3);
    CHECK(d.outcome(23) == o);
    CHECK_THROWS_AS(d.flat_index(std::vector<std::size_t>{2, 0, 0}), InvalidArgument);
  }

  TEST_CASE("point mass and independent constructors") {
    const std::vector<std::size_t> o{1, 0};
    const auto pm = JointDistribution::point_mass({2, 2}, o);
    CHECK(pm.at(o) == 1.0);
    const auto ind = JointDistribution::independent({{0.25, 0.75}, {0.5, 0.5}});
    CHECK(ind.mass()[3] == doctest::Approx(0.375).epsilon(1e-15));
  }

  TEST_CASE("json round trip and diagnostics") {
    const auto x = xor_triple();
    const auto back = distribution_from_json(distribution_to_json(x));
    CHECK(back.alphabet_sizes() == x.alphabet_sizes());
    CHECK(back.mass() == x.mass());
    CHECK_THROWS_AS(distribution_from_json("{"), InvariantViolation);
    CHECK_THROWS_AS(distribution_from_json("{\"mass\": [1]}"), InvariantViolation);
    CHECK_THROWS_WITH(distribution_from_json("{\"alphabet_sizes\": [2], \"mass\": [0.5, 0.4]}"),
                      doctest::Contains("mass sums to 0.9"));
  }
}

TEST_SUITE("marginalize") {
  TEST_CASE("uniform 2x2, keep {0} is uniform over 2") {
    const auto m = marginalize(JointDistribution::uniform({2, 2}), {0});
    CHECK(m.alphabet_sizes() == std::vector<std::size_t>{2});
    CHECK(m.mass()[0] == 0.5);
    CHECK(m.mass()[1] == 0.5);
  }

  TEST_CASE("point mass at (1,0), keep {1} is a point mass at 0") {
    const std::vector<std::size_t> o{1, 0};
    const auto m = marginalize(JointDistribution::point_mass({2, 2}, o), {1});
    CHECK(m.mass() == std::vector<double>{1.0, 0.0});
  }

  TEST_CASE("random 3x2x2, keep {0,2} matches a double loop") {
    Rng rng(11);
    const auto d = JointDistribution::random({3, 2, 2}, rng);
    const auto m = marginalize(d, {0, 2});
    for (std::size_t a = 0; a < 3; ++a)
      for (std::size_t c = 0; c < 2; ++c) {
        double sum = 0.0;
        for (std::size_t b = 0; b < 2; ++b) sum += d.mass()[a * 4 + b * 2 + c];
        CHECK(m.mass()[a * 2 + c] == doctest::Approx(sum).epsilon(1e-15));
      }
  }

  TEST_CASE("keep order is respected") {
    Rng rng(12);
    const auto d = JointDistribution::random({2, 3}, rng);
    const auto m = marginalize(d, {1, 0});
    CHECK(m.alphabet_sizes() == std::vector<std::size_t>{3, 2});
    for (std::size_t a = 0; a < 2; ++a)
      for (std::size_t b = 0; b < 3; ++b) CHECK(m.mass()[b * 2 + a] == d.mass()[a * 3 + b]);
  }

  TEST_CASE("marginal of a product equals the factor") {
    const auto d = JointDistribution::independent({{0.2, 0.8}, {0.1, 0.3, 0.6}});
    const auto m = marginalize(d, {1});
    CHECK(m.mass()[2] == doctest::Approx(0.6).epsilon(1e-14));
  }

  TEST_CASE("bad subsets") {
    const auto d = JointDistribution::uniform({2, 2});
    CHECK_THROWS_AS(marginalize(d, VariableSubset{}), InvalidArgument);
    CHECK_THROWS_AS(marginalize(d, {2}), InvalidArgument);
    CHECK_THROWS_AS(marginalize(d, {0, 0}), InvalidArgument);
  }
}

TEST_SUITE("entropy and mutual information") {
  TEST_CASE("entropy examples") {
    CHECK(entropy(JointDistribution::uniform({4}), {0}) == doctest::Approx(std::log(4.0)).epsilon(1e-15));
    const std::vector<std::size_t> o{2};
    CHECK(entropy(JointDistribution::point_mass({3}, o), {0}) == 0.0);
    Rng rng(13);
    const auto d = JointDistribution::random({3, 3}, rng);
    CHECK(entropy(d, {0, 1}) ==
          doctest::Approx(static_cast<double>(oracle::entropy(d.alphabet_sizes(), d.mass(), {0, 1}))).epsilon(1e-14));
  }

  TEST_CASE("mutual information examples") {
    const auto ind = JointDistribution::independent({{0.3, 0.7}, {0.6, 0.4}});
    CHECK(std::abs(mutual_information(ind, {0}, {1})) < 1e-15);
    for (std::size_t k : {2, 3, 5}) {
      const auto copy = uniform_copies(k, 2);
      CHECK(mutual_information(copy, {0}, {1}) == doctest::Approx(std::log(static_cast<double>(k))).epsilon(1e-14));
    }
    const auto x = xor_triple();
    CHECK(std::abs(mutual_information(x, {2}, {0})) < 1e-15);
    CHECK(mutual_information(x, {2}, {0, 1}) == doctest::Approx(kLn2).epsilon(1e-14));
    CHECK_THROWS_AS(mutual_information(x, {0, 1}, {1, 2}), InvalidArgument);
  }

  TEST_CASE("conditional mutual information examples") {
    const auto x = xor_triple();
    CHECK(conditional_mutual_information(x, {0}, {1}, {2}) == doctest::Approx(kLn2).epsilon(1e-14));
    const auto ind = JointDistribution::independent({{0.3, 0.7}, {0.6, 0.4}, {0.5, 0.5}});
    CHECK(std::abs(conditional_mutual_information(ind, {0}, {1}, {2})) < 1e-15);
    CHECK_THROWS_AS(conditional_mutual_information(x, {0}, {1}, VariableSubset{}), InvalidArgument);
    CHECK_THROWS_AS(conditional_mutual_information(x, {0}, {1}, {1}), InvalidArgument);
  }

  TEST_CASE("measures agree with the brute-force oracle on random tables") {
    Rng rng(14);
    for (int t = 0; t < 50; ++t) {
      const auto d = random_dist(rng);
      const auto& s = d.alphabet_sizes();
      const auto& m = d.mass();
      const std::size_t y = s.size() - 1;
      CHECK(mutual_information(d, {y}, {0}) == doctest::Approx(double(oracle::mi(s, m, {y}, {0}))).epsilon(1e-12));
      CHECK(conditional_mutual_information(d, {0}, {1}, {y}) ==
            doctest::Approx(double(oracle::cmi(s, m, {0}, {1}, {y}))).epsilon(1e-12));
      CHECK(std::abs(total_correlation(d) - static_cast<double>(oracle::tc(s, m))) < 1e-13);
    }
  }
}

TEST_SUITE("total correlation") {
  TEST_CASE("examples") {
    const auto ind = JointDistribution::independent({{0.3, 0.7}, {0.5, 0.25, 0.25}, {0.6, 0.4}});
    CHECK(std::abs(total_correlation(ind)) < 1e-15);
    CHECK(std::abs(total_correlation_kl(ind)) < 1e-15);
    for (std::size_t k : {2, 3, 4}) {
      const auto copies = uniform_copies(k, 3);
      CHECK(total_correlation(copies) == doctest::Approx(2.0 * std::log(double(k))).epsilon(1e-14));
    }
    const auto x = xor_triple();
    CHECK(total_correlation(x) == doctest::Approx(kLn2).epsilon(1e-14));
    CHECK(total_correlation_kl(x) == doctest::Approx(kLn2).epsilon(1e-14));
  }

  TEST_CASE("property: both forms agree and both decompositions hold") {
    Rng rng(15);
    for (int t = 0; t < 100; ++t) {
      const auto d = random_dist(rng, 3, 3);
      const double tc = total_correlation(d);
      CHECK(std::abs(tc - total_correlation_kl(d)) < 1e-12);
      const double first = mutual_information(d, {2}, {0, 1}) + mutual_information(d, {0}, {1});
      const double second = mutual_information(d, {2}, {0}) + mutual_information(d, {2}, {1}) +
                            conditional_mutual_information(d, {0}, {1}, {2});
      CHECK(std::abs(first - tc) < 1e-12);
      CHECK(std::abs(second - tc) < 1e-12);
      // Chain rule: I(y; (a, v)) = I(y; a) + I(y; v | a).
      const double chain = mutual_information(d, {2}, {0}) + conditional_mutual_information(d, {2}, {1}, {0});
      CHECK(std::abs(chain - mutual_information(d, {2}, {0, 1})) < 1e-12);
    }
  }

  TEST_CASE("property: every measure is non-negative") {
    Rng rng(16);
    for (int t = 0; t < 100; ++t) {
      const auto d = random_dist(rng);
      CHECK(total_correlation(d) >= -1e-12);
      CHECK(mutual_information(d, {0}, {1}) >= -1e-12);
      CHECK(conditional_mutual_information(d, {0}, {1}, {2}) >= -1e-12);
      const auto q = JointDistribution::random(d.alphabet_sizes(), rng);
      CHECK(kl_divergence(d, q) >= -1e-12);
      const auto p0 = marginalize(d, {0});
      const auto q0 = marginalize(q, {0});
      CHECK(js_divergence(p0.mass(), q0.mass()) >= -1e-12);
      CHECK(js_divergence(p0.mass(), q0.mass()) <= kLn2 + 1e-12);
    }
  }
}

TEST_SUITE("product of marginals") {
  TEST_CASE("independent input is unchanged") {
    const auto d = JointDistribution::independent({{0.2, 0.8}, {0.1, 0.9}});
    const auto p = product_of_marginals(d);
    for (std::size_t c = 0; c < d.num_cells(); ++c) CHECK(p.mass()[c] == doctest::Approx(d.mass()[c]).epsilon(1e-15));
  }

  TEST_CASE("xor triple gives uniform over 8") {
    const auto p = product_of_marginals(xor_triple());
    for (double m : p.mass()) CHECK(m == doctest::Approx(0.125).epsilon(1e-15));
  }

  TEST_CASE("point mass stays a point mass") {
    const std::vector<std::size_t> o{0, 1};
    const auto p = product_of_marginals(JointDistribution::point_mass({2, 2}, o));
    CHECK(p.at(o) == 1.0);
  }
}

TEST_SUITE("divergences") {
  TEST_CASE("kl examples") {
    const auto u = JointDistribution::uniform({3});
    CHECK(kl_divergence(u, u) == 0.0);
    const std::vector<std::size_t> o{1};
    CHECK(kl_divergence(JointDistribution::point_mass({3}, o), u) == doctest::Approx(std::log(3.0)).epsilon(1e-15));
    Rng rng(17);
    const auto p = JointDistribution::random({2, 3}, rng);
    const auto q = JointDistribution::random({2, 3}, rng);
    CHECK(kl_divergence(p, q) == doctest::Approx(double(oracle::kl(widen(p.mass()), widen(q.mass())))).epsilon(1e-13));
    CHECK_THROWS_AS(kl_divergence(u, JointDistribution::point_mass({3}, o)), InvalidArgument);
    CHECK_THROWS_AS(kl_divergence(u, JointDistribution::uniform({2})), InvalidArgument);
  }

  TEST_CASE("js examples") {
    const std::vector<double> a{0.3, 0.7};
    CHECK(js_divergence(a, a) == 0.0);
    CHECK(js_divergence(std::vector<double>{1.0, 0.0}, std::vector<double>{0.0, 1.0}) ==
          doctest::Approx(kLn2).epsilon(1e-15));
    const std::vector<double> p{0.5, 0.5}, q{1.0, 0.0};
    CHECK(js_divergence(p, q) == doctest::Approx(double(oracle::js(widen(p), widen(q)))).epsilon(1e-14));
    CHECK_THROWS_AS(js_divergence(std::vector<double>{0.5, 0.6}, q), InvalidArgument);
  }

  TEST_CASE("categorical entropy") {
    CHECK(categorical_entropy(std::vector<double>(4, 0.25)) == doctest::Approx(std::log(4.0)).epsilon(1e-15));
    CHECK(categorical_entropy(std::vector<double>{1.0, 0.0}) == 0.0);
  }
}

TEST_SUITE("gibbs distribution") {
  TEST_CASE("constant critic leaves the base unchanged") {
    Rng rng(18);
    const auto q = JointDistribution::random({2, 3}, rng);
    const auto g = gibbs_distribution(std::vector<double>(6, 4.2), q);
    for (std::size_t c = 0; c < 6; ++c) CHECK(g.mass()[c] == doctest::Approx(q.mass()[c]).epsilon(1e-14));
  }

  TEST_CASE("log-ratio critic recovers the joint, and shifts do not matter") {
    const auto x = xor_triple();
    const auto q = product_of_marginals(x);
    std::vector<double> t(8);
    for (std::size_t c = 0; c < 8; ++c) t[c] = x.mass()[c] > 0 ? std::log(x.mass()[c] / q.mass()[c]) : -1000.0;
    const auto g = gibbs_distribution(t, q);
    for (std::size_t c = 0; c < 8; ++c) CHECK(std::abs(g.mass()[c] - x.mass()[c]) < 1e-10);
    std::vector<double> shifted = t;
    for (auto& v : shifted) v += 7.5;
    const auto g2 = gibbs_distribution(shifted, q);
    for (std::size_t c = 0; c < 8; ++c) CHECK(std::abs(g2.mass()[c] - g.mass()[c]) < 1e-15);
  }

  TEST_CASE("property: log-ratio gibbs reproduces random joints") {
    Rng rng(19);
    for (int t = 0; t < 50; ++t) {
      const auto d = random_dist(rng);
      const auto q = product_of_marginals(d);
      std::vector<double> crit(d.num_cells());
      for (std::size_t c = 0; c < crit.size(); ++c) crit[c] = std::log(d.mass()[c] / q.mass()[c]);
      const auto g = gibbs_distribution(crit, q);
      for (std::size_t c = 0; c < crit.size(); ++c) CHECK(std::abs(g.mass()[c] - d.mass()[c]) < 1e-10);
    }
  }

  TEST_CASE("wrong length critic is rejected") {
    CHECK_THROWS_AS(gibbs_distribution(std::vector<double>(3, 0.0), JointDistribution::uniform({2})), InvalidArgument);
  }
}
