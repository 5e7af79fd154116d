#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "tcmax/error.hpp"
#include "tcmax/estimators.hpp"

using namespace tcmax;

namespace {

const double kLn2 = std::numbers::ln2;

JointDistribution random_dist(Rng& rng, std::size_t vars) {
  std::vector<std::size_t> sizes(vars);
  for (auto& s : sizes) s = std::uniform_int_distribution<std::size_t>(2, 4)(rng);
  return JointDistribution::random(std::move(sizes), rng);
}

}  // namespace

TEST_SUITE("exact dv bound") {
  TEST_CASE("constant critic gives zero") {
    const auto x = xor_triple();
    const auto est = dv_bound_exact(TabularCritic::constant(x.alphabet_sizes(), 3.0), x);
    CHECK(std::abs(est.lower_bound) < 1e-15);
  }

  TEST_CASE("log-ratio critic on the xor triple reaches ln 2") {
    const auto x = xor_triple();
    const auto critic = TabularCritic::log_ratio(x, product_of_marginals(x));
    CHECK(dv_bound_exact(critic, x).lower_bound == doctest::Approx(kLn2).epsilon(1e-15));
  }

  TEST_CASE("matches the long-double oracle") {
    Rng rng(31);
    std::normal_distribution<double> normal(0.0, 2.0);
    for (int t = 0; t < 50; ++t) {
      const auto d = random_dist(rng, 3);
      auto critic = TabularCritic::constant(d.alphabet_sizes(), 0.0);
      for (auto& v : critic.values) v = normal(rng);
      const double want = static_cast<double>(oracle::dv_bound(d.alphabet_sizes(), d.mass(), critic.values));
      CHECK(std::abs(dv_bound_exact(critic, d).lower_bound - want) < 1e-13);
    }
  }

  TEST_CASE("property: random critics never exceed TC") {
    Rng rng(32);
    for (int t = 0; t < 1000; ++t) {
      const auto d = random_dist(rng, 3);
      auto critic = TabularCritic::constant(d.alphabet_sizes(), 0.0);
      std::normal_distribution<double> normal(0.0, std::pow(10.0, std::uniform_real_distribution<double>(-1, 1)(rng)));
      for (auto& v : critic.values) v = normal(rng);
      REQUIRE(dv_bound_exact(critic, d).lower_bound <= total_correlation(d) + 1e-9);
    }
  }

  TEST_CASE("property: log-ratio plus any constant is tight") {
    Rng rng(33);
    for (int t = 0; t < 100; ++t) {
      const auto d = random_dist(rng, 2 + t % 3);
      const double offset = std::uniform_real_distribution<double>(-50.0, 50.0)(rng);
      const auto critic = TabularCritic::log_ratio(d, product_of_marginals(d), offset);
      CHECK(std::abs(dv_bound_exact(critic, d).lower_bound - total_correlation(d)) < 1e-10);
    }
  }

  TEST_CASE("property: shifting a critic leaves the bound unchanged") {
    Rng rng(34);
    std::normal_distribution<double> normal;
    for (int t = 0; t < 100; ++t) {
      const auto d = random_dist(rng, 3);
      auto critic = TabularCritic::constant(d.alphabet_sizes(), 0.0);
      for (auto& v : critic.values) v = normal(rng);
      auto shifted = critic;
      const double c = std::uniform_real_distribution<double>(-20.0, 20.0)(rng);
      for (auto& v : shifted.values) v += c;
      CHECK(std::abs(dv_bound_exact(critic, d).lower_bound - dv_bound_exact(shifted, d).lower_bound) < 1e-12);
    }
  }

  TEST_CASE("shape mismatch and non-finite critics are rejected") {
    const auto x = xor_triple();
    CHECK_THROWS_AS(dv_bound_exact(TabularCritic::constant({2, 2}, 0.0), x), InvalidArgument);
    auto bad = TabularCritic::constant(x.alphabet_sizes(), 0.0);
    bad.values[0] = NAN;
    CHECK_THROWS_AS(dv_bound_exact(bad, x), InvalidArgument);
  }
}

TEST_SUITE("sampled dv bound") {
  TEST_CASE("exact-multiplicity samples reproduce the exact bound") {
    const auto x = xor_triple();
    const auto q = product_of_marginals(x);
    auto critic = TabularCritic::constant(x.alphabet_sizes(), 0.0);
    Rng rng(35);
    std::normal_distribution<double> normal;
    for (auto& v : critic.values) v = normal(rng);
    const auto joint = exact_frequency_outcomes(x, 8);
    const auto product = exact_frequency_outcomes(q, 16);
    const auto est = dv_bound_sampled(critic, joint, product);
    CHECK(est.lower_bound == doctest::Approx(dv_bound_exact(critic, x).lower_bound).epsilon(1e-14));
    CHECK(est.joint_count == 8);
    CHECK(est.product_count == 16);
  }

  TEST_CASE("single joint sample with a constant critic gives zero") {
    const std::vector<Outcome> one{{0, 1}};
    CHECK(dv_bound_sampled(TabularCritic::constant({2, 2}, 1.5), one, one).lower_bound == 0.0);
  }

  TEST_CASE("1e4 xor samples with the log-ratio critic land within 0.05 of ln 2") {
    const auto x = xor_triple();
    const auto critic = TabularCritic::log_ratio(x, product_of_marginals(x));
    TupleSource src(x, 36);
    const auto joint = src.draw(10000);
    const auto product = src.draw_product(10000);
    CHECK(std::abs(dv_bound_sampled(critic, joint, product).lower_bound - kLn2) < 0.05);
  }

  TEST_CASE("empty samples are rejected") {
    const std::vector<Outcome> none;
    const std::vector<Outcome> one{{0, 1}};
    CHECK_THROWS_AS(dv_bound_sampled(TabularCritic::constant({2, 2}, 0.0), none, one), InvalidArgument);
  }
}

TEST_SUITE("tabular tcne fit") {
  TEST_CASE("independent source converges to 0") {
    const auto d = JointDistribution::independent({{0.2, 0.8}, {0.5, 0.3, 0.2}});
    const auto fit = tcne_fit_tabular(d, 2000, 1.0);
    CHECK(std::abs(fit.trace.back().lower_bound) < 1e-3);
  }

  TEST_CASE("xor triple converges to ln 2") {
    const auto fit = tcne_fit_tabular(xor_triple(), 20000, 1.0);
    CHECK(std::abs(fit.trace.back().lower_bound - kLn2) < 1e-3);
    CHECK(fit.trace.front().lower_bound == 0.0);
    CHECK(fit.trace.size() == 20001);
  }

  TEST_CASE("three copies of uniform over 3 converge to 2 ln 3") {
    const auto fit = tcne_fit_tabular(uniform_copies(3, 3), 20000, 1.0);
    CHECK(std::abs(fit.trace.back().lower_bound - 2.0 * std::log(3.0)) < 1e-3);
  }

  TEST_CASE("two-variable fit converges to the mutual information") {
    for (double p : {0.6, 0.9, 0.99}) {
      const auto d = correlated_bits(p);
      const auto fit = tcne_fit_tabular(d, 20000, 1.0);
      CHECK(std::abs(fit.trace.back().lower_bound - mutual_information(d, {0}, {1})) < 1e-3);
    }
  }

  TEST_CASE("trace never exceeds TC") {
    Rng rng(37);
    const auto d = random_dist(rng, 3);
    const auto fit = tcne_fit_tabular(d, 500, 1.0);
    for (const auto& e : fit.trace) CHECK(e.lower_bound <= total_correlation(d) + 1e-9);
  }

  TEST_CASE("bad arguments") {
    CHECK_THROWS_AS(tcne_fit_tabular(xor_triple(), 10, 0.0), InvalidArgument);
    CHECK_THROWS_AS(tcne_fit_tabular(JointDistribution::uniform({101, 100}), 10, 1.0), InvalidArgument);
  }
}

TEST_SUITE("neural tcne fit") {
  NeuralFitConfig config(std::uint64_t seed) {
    NeuralFitConfig cfg;
    cfg.seed = seed;
    return cfg;
  }

  TEST_CASE("independent source stays near 0") {
    const auto d = JointDistribution::independent({{0.3, 0.7}, {0.5, 0.25, 0.25}, {0.6, 0.4}});
    TupleSource src(d, 41);
    auto critic = NeuralCritic::create(d.alphabet_sizes(), {64}, Activation::relu, 42);
    const auto trace = tcne_fit_neural(src, critic, config(43));
    const double est = smoothed_estimate(trace);
    CHECK(est >= -0.05);
    CHECK(est <= 0.05);
  }

  TEST_CASE("xor source with a two-hidden-layer critic") {
    TupleSource src(xor_triple(), 44);
    auto critic = NeuralCritic::create({2, 2, 2}, {32, 32}, Activation::relu, 45);
    const double est = smoothed_estimate(tcne_fit_neural(src, critic, config(46)));
    CHECK(est >= kLn2 - 0.1);
    CHECK(est <= kLn2 + 0.05);
  }

  TEST_CASE("correlated bits: the two-variable case") {
    const auto d = correlated_bits(0.9);
    TupleSource src(d, 47);
    auto critic = NeuralCritic::create({2, 2}, {64}, Activation::relu, 48);
    const double est = smoothed_estimate(tcne_fit_neural(src, critic, config(49)));
    CHECK(std::abs(est - mutual_information(d, {0}, {1})) < 0.1);
  }

  TEST_CASE("ema-corrected gradient also fits xor") {
    TupleSource src(xor_triple(), 50);
    auto critic = NeuralCritic::create({2, 2, 2}, {32, 32}, Activation::relu, 51);
    auto cfg = config(52);
    cfg.ema_correction = true;
    const double est = smoothed_estimate(tcne_fit_neural(src, critic, cfg));
    CHECK(est >= kLn2 - 0.1);
    CHECK(est <= kLn2 + 0.05);
  }

  TEST_CASE("same seeds give identical traces") {
    auto run = [] {
      TupleSource src(xor_triple(), 53);
      auto critic = NeuralCritic::create({2, 2, 2}, {8}, Activation::relu, 54);
      NeuralFitConfig cfg;
      cfg.iterations = 50;
      cfg.seed = 55;
      std::vector<double> out;
      for (const auto& e : tcne_fit_neural(src, critic, cfg)) out.push_back(e.lower_bound);
      return out;
    };
    CHECK(run() == run());
  }
}

TEST_SUITE("estimator plumbing") {
  TEST_CASE("neural critic encodes concatenated one-hots") {
    const auto critic = NeuralCritic::create({2, 3}, {4}, Activation::relu, 1);
    CHECK(critic.encoded_width() == 5);
    const std::vector<Outcome> o{{1, 2}};
    const Matrix m = critic.encode(o);
    CHECK(m(0, 1) == 1.0);
    CHECK(m(0, 4) == 1.0);
    CHECK(m.sum() == 2.0);
  }

  TEST_CASE("exact frequency outcomes") {
    const auto x = xor_triple();
    const auto out = exact_frequency_outcomes(x, 8);
    CHECK(out.size() == 8);
    CHECK_THROWS_AS(exact_frequency_outcomes(x, 6), InvalidArgument);
  }

  TEST_CASE("tuple source marginals and joint frequencies") {
    const auto x = xor_triple();
    TupleSource src(x, 56);
    const auto draws = src.draw(100000);
    std::vector<double> freq(8, 0.0);
    for (const auto& o : draws) freq[o[0] * 4 + o[1] * 2 + o[2]] += 1.0 / 100000.0;
    const auto& m = x.mass();
    for (std::size_t c = 0; c < 8; ++c) CHECK(std::abs(freq[c] - m[c]) < 0.01);
  }

  TEST_CASE("smoothed estimate and trace csv") {
    std::vector<DvEstimate> trace(20);
    for (std::size_t i = 0; i < trace.size(); ++i) trace[i].lower_bound = double(i);
    CHECK(smoothed_estimate(trace) == doctest::Approx(18.5));
    std::ostringstream out;
    write_trace_csv(out, std::span<const DvEstimate>(trace).first(2));
    CHECK(out.str().rfind("iter,joint_term,product_term,lower_bound\n0,", 0) == 0);
    CHECK_THROWS_AS(smoothed_estimate(std::vector<DvEstimate>{}), InvalidArgument);
  }
}
