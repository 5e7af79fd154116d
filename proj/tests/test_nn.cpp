#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "tcmax/error.hpp"
#include "tcmax/nn.hpp"

using namespace tcmax;

namespace {

std::vector<oracle::Layer> layers_of(const DenseNet& net) {
  std::vector<oracle::Layer> out;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    oracle::Layer L;
    L.in = static_cast<std::size_t>(net.weight(l).cols());
    L.out = static_cast<std::size_t>(net.weight(l).rows());
    for (std::size_t o = 0; o < L.out; ++o) {
      for (std::size_t i = 0; i < L.in; ++i) L.w.push_back(net.weight(l)(Eigen::Index(o), Eigen::Index(i)));
      L.b.push_back(net.bias(l)(Eigen::Index(o), 0));
    }
    out.push_back(std::move(L));
  }
  return out;
}

DenseNet random_net(std::vector<std::size_t> widths, Activation act, Rng& rng) {
  DenseNet net(std::move(widths), act);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (auto& p : net.parameters())
    for (Eigen::Index k = 0; k < p.size(); ++k) p.data()[k] = u(rng);
  return net;
}

Vector random_vector(Rng& rng, Eigen::Index n) {
  std::normal_distribution<double> normal;
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = normal(rng);
  return v;
}

}  // namespace

TEST_SUITE("dense net forward") {
  TEST_CASE("zero weights output the final bias") {
    DenseNet net({3, 4, 2}, Activation::tanh);
    net.bias(1) << 0.5, -1.5;
    const Vector out = net.forward(Vector(Vector::Constant(3, 2.0)));
    CHECK(out(0) == 0.5);
    CHECK(out(1) == -1.5);
  }

  TEST_CASE("identity single layer echoes the input") {
    DenseNet net({3, 3}, Activation::relu);
    net.weight(0) = Matrix::Identity(3, 3);
    Vector x(3);
    x << -1.0, 0.25, 7.0;
    CHECK(net.forward(x) == x);
  }

  TEST_CASE("random 2-3-2 tanh net matches a loop recompute") {
    Rng rng(21);
    for (int t = 0; t < 20; ++t) {
      const DenseNet net = random_net({2, 3, 2}, Activation::tanh, rng);
      const Vector x = random_vector(rng, 2);
      const auto want = oracle::forward(layers_of(net), {x(0), x(1)}, true);
      const Vector got = net.forward(x);
      for (Eigen::Index o = 0; o < 2; ++o) CHECK(got(o) == doctest::Approx(double(want[std::size_t(o)])).epsilon(1e-14));
    }
  }

  TEST_CASE("batched forward equals per-row forward") {
    Rng rng(22);
    const DenseNet net = random_net({3, 5, 4, 2}, Activation::relu, rng);
    Matrix xs(4, 3);
    for (Eigen::Index i = 0; i < 4; ++i) xs.row(i) = random_vector(rng, 3).transpose();
    const Matrix out = net.forward(xs);
    for (Eigen::Index i = 0; i < 4; ++i) {
      const Vector row = net.forward(Vector(xs.row(i).transpose()));
      CHECK((out.row(i).transpose() - row).cwiseAbs().maxCoeff() < 1e-14);
    }
  }

  TEST_CASE("shape and finiteness checks") {
    DenseNet net({3, 2}, Activation::relu);
    CHECK_THROWS_AS(net.forward(Vector(Vector::Zero(2))), InvalidArgument);
    Vector bad = Vector::Zero(3);
    bad(1) = NAN;
    CHECK_THROWS_AS(net.forward(bad), InvalidArgument);
    CHECK_THROWS_AS(DenseNet({3}, Activation::relu), InvalidArgument);
    CHECK_THROWS_AS(DenseNet({3, 0, 2}, Activation::relu), InvalidArgument);
  }

  TEST_CASE("glorot init is seeded and bounded") {
    Rng a(5), b(5);
    const auto n1 = DenseNet::glorot({4, 6, 3}, Activation::relu, a);
    const auto n2 = DenseNet::glorot({4, 6, 3}, Activation::relu, b);
    CHECK(n1.weight(0) == n2.weight(0));
    CHECK(n1.weight(0).cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 10.0));
    CHECK(n1.bias(0).isZero());
  }
}

TEST_SUITE("dense net backward") {
  TEST_CASE("linear 1-1 net with cotangent 1") {
    DenseNet net({1, 1}, Activation::relu);
    net.weight(0)(0, 0) = 3.0;
    Vector x(1), cot(1);
    x << 2.5;
    cot << 1.0;
    const auto g = backward(net, x, cot);
    CHECK(g.arrays[0](0, 0) == 2.5);
    CHECK(g.arrays[1](0, 0) == 1.0);
  }

  TEST_CASE("zero cotangent gives zero gradients") {
    Rng rng(23);
    const DenseNet net = random_net({3, 4, 2}, Activation::tanh, rng);
    const auto g = backward(net, random_vector(rng, 3), Vector::Zero(2));
    for (const auto& a : g.arrays) CHECK(a.isZero());
  }

  TEST_CASE("property: gradients match central differences") {
    Rng rng(24);
    double worst = 0.0;
    for (int t = 0; t < 50; ++t) {
      DenseNet net = random_net({3, 4, 3, 2}, Activation::tanh, rng);
      const Vector x = random_vector(rng, 3);
      const Vector cot = random_vector(rng, 2);
      const auto g = backward(net, x, cot);
      const double h = 1e-5;
      for (std::size_t k = 0; k < net.parameters().size(); ++k) {
        Matrix& p = net.parameters()[k];
        for (Eigen::Index i = 0; i < p.size(); ++i) {
          const double saved = p.data()[i];
          p.data()[i] = saved + h;
          const double up = net.forward(x).dot(cot);
          p.data()[i] = saved - h;
          const double down = net.forward(x).dot(cot);
          p.data()[i] = saved;
          const double fd = (up - down) / (2 * h);
          const double a = g.arrays[k].data()[i];
          worst = std::max(worst, std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-5}));
        }
      }
    }
    CHECK(worst < 1e-4);
  }

  TEST_CASE("input cotangent matches central differences") {
    Rng rng(25);
    const DenseNet net = random_net({3, 5, 2}, Activation::tanh, rng);
    Matrix x(1, 3);
    x.row(0) = random_vector(rng, 3).transpose();
    Matrix cot(1, 2);
    cot.row(0) = random_vector(rng, 2).transpose();
    auto grads = GradientSet::zeros_like(std::span<const Matrix>(net.parameters()));
    const Matrix dx = net.backward(net.forward_tape(x), cot, grads.arrays);
    for (Eigen::Index i = 0; i < 3; ++i) {
      Matrix up = x, down = x;
      up(0, i) += 1e-6;
      down(0, i) -= 1e-6;
      const double fd = ((net.forward(up) - net.forward(down)).cwiseProduct(cot)).sum() / 2e-6;
      CHECK(dx(0, i) == doctest::Approx(fd).epsilon(1e-6));
    }
  }

  TEST_CASE("batched backward sums per-sample gradients") {
    Rng rng(26);
    const DenseNet net = random_net({2, 3, 2}, Activation::relu, rng);
    Matrix xs(3, 2), cots(3, 2);
    for (Eigen::Index i = 0; i < 3; ++i) {
      xs.row(i) = random_vector(rng, 2).transpose();
      cots.row(i) = random_vector(rng, 2).transpose();
    }
    auto batched = GradientSet::zeros_like(std::span<const Matrix>(net.parameters()));
    net.backward(net.forward_tape(xs), cots, batched.arrays);
    auto summed = GradientSet::zeros_like(std::span<const Matrix>(net.parameters()));
    for (Eigen::Index i = 0; i < 3; ++i)
      summed += backward(net, Vector(xs.row(i).transpose()), Vector(cots.row(i).transpose()));
    for (std::size_t k = 0; k < batched.arrays.size(); ++k)
      CHECK((batched.arrays[k] - summed.arrays[k]).cwiseAbs().maxCoeff() < 1e-13);
  }
}

TEST_SUITE("sgd") {
  TEST_CASE("zero gradients and zero velocity leave parameters unchanged") {
    Rng rng(27);
    DenseNet net = random_net({2, 2}, Activation::relu, rng);
    const auto before = net.parameters();
    OptimizerState opt(0.1, 0.9, 0.0);
    sgd_step(net, GradientSet::zeros_like(std::span<const Matrix>(net.parameters())), opt);
    CHECK(net.parameters()[0] == before[0]);
    CHECK(net.parameters()[1] == before[1]);
  }

  TEST_CASE("momentum 0 and no decay is plain gradient descent") {
    Matrix w(1, 1);
    w << 2.0;
    Matrix* params[] = {&w};
    GradientSet g;
    g.arrays.push_back(Matrix::Constant(1, 1, 0.5));
    OptimizerState opt(0.1, 0.0, 0.0);
    sgd_step(params, g, opt);
    CHECK(w(0, 0) == doctest::Approx(1.95).epsilon(1e-15));
    sgd_step(params, g, opt);
    CHECK(w(0, 0) == doctest::Approx(1.90).epsilon(1e-15));
  }

  TEST_CASE("two momentum steps on w^2 decrease it (hand computed)") {
    Matrix w(1, 1);
    w << 1.0;
    Matrix* params[] = {&w};
    OptimizerState opt(0.1, 0.9, 0.0);
    GradientSet g;
    g.arrays.push_back(2.0 * w);
    sgd_step(params, g, opt);  // v = 2, w = 0.8
    CHECK(w(0, 0) == doctest::Approx(0.8).epsilon(1e-15));
    g.arrays[0] = 2.0 * w;
    sgd_step(params, g, opt);  // v = 1.8 + 1.6 = 3.4, w = 0.46
    CHECK(w(0, 0) == doctest::Approx(0.46).epsilon(1e-14));
    CHECK(w(0, 0) * w(0, 0) < 1.0);
  }

  TEST_CASE("weight decay is added to the gradient") {
    Matrix w(1, 1);
    w << 2.0;
    Matrix* params[] = {&w};
    GradientSet g;
    g.arrays.push_back(Matrix::Zero(1, 1));
    OptimizerState opt(0.5, 0.0, 0.1);
    sgd_step(params, g, opt);
    CHECK(w(0, 0) == doctest::Approx(1.9).epsilon(1e-15));
  }

  TEST_CASE("bad inputs") {
    CHECK_THROWS_AS(OptimizerState(-1.0, 0.9, 0.0), InvalidArgument);
    CHECK_THROWS_AS(OptimizerState(0.1, 1.0, 0.0), InvalidArgument);
    Matrix w(1, 1);
    w << 1.0;
    Matrix* params[] = {&w};
    GradientSet g;
    g.arrays.push_back(Matrix::Constant(1, 1, NAN));
    OptimizerState opt(0.1, 0.0, 0.0);
    CHECK_THROWS_AS(sgd_step(params, g, opt), NumericalError);
    CHECK(w(0, 0) == 1.0);
  }
}

TEST_SUITE("log-sum-exp") {
  TEST_CASE("zeros of length n give ln n") {
    for (std::size_t n : {1, 2, 7}) CHECK(log_sum_exp(std::vector<double>(n, 0.0)) == doctest::Approx(std::log(double(n))));
  }

  TEST_CASE("large values do not overflow") {
    CHECK(log_sum_exp(std::vector<double>{1000.0, 1000.0}) == doctest::Approx(1000.0 + std::log(2.0)).epsilon(1e-15));
    CHECK(log_sum_exp(std::vector<double>{-1000.0, -1000.0}) == doctest::Approx(-1000.0 + std::log(2.0)).epsilon(1e-15));
  }

  TEST_CASE("random vectors match an extended-precision direct sum") {
    Rng rng(28);
    std::normal_distribution<double> normal(0.0, 3.0);
    for (int t = 0; t < 100; ++t) {
      std::vector<double> v(1 + t % 17);
      for (auto& x : v) x = normal(rng);
      CHECK(log_sum_exp(v) == doctest::Approx(double(oracle::lse(v))).epsilon(1e-14));
    }
  }

  TEST_CASE("-inf entries are ignored, all -inf gives -inf, empty throws") {
    const double inf = std::numeric_limits<double>::infinity();
    CHECK(log_sum_exp(std::vector<double>{-inf, 0.0}) == 0.0);
    CHECK(log_sum_exp(std::vector<double>{-inf, -inf}) == -inf);
    CHECK_THROWS_AS(log_sum_exp(std::vector<double>{}), InvalidArgument);
  }

  TEST_CASE("fault hook shifts the result while in scope") {
    const std::vector<double> v{0.0, 0.0};
    {
      testing::ScopedLseFault fault(0.25);
      CHECK(log_sum_exp(v) == doctest::Approx(std::log(2.0) + 0.25));
    }
    CHECK(log_sum_exp(v) == doctest::Approx(std::log(2.0)));
  }

  TEST_CASE("softmax rows sum to one and are shift invariant") {
    Matrix logits(2, 3);
    logits << 1.0, 2.0, 3.0, 1000.0, 1000.0, 1000.0;
    const Matrix p = softmax_rows(logits);
    CHECK(p.row(0).sum() == doctest::Approx(1.0));
    CHECK(p(1, 2) == doctest::Approx(1.0 / 3.0));
    Matrix shifted = logits;
    shifted.row(0).array() += 42.0;
    CHECK((softmax_rows(shifted).row(0) - p.row(0)).cwiseAbs().maxCoeff() < 1e-15);
  }
}

TEST_SUITE("parameters and checkpoints") {
  TEST_CASE("flatten and assign round trip") {
    Rng rng(29);
    DenseNet net = random_net({2, 3, 1}, Activation::tanh, rng);
    std::vector<Matrix*> ptrs;
    for (auto& p : net.parameters()) ptrs.push_back(&p);
    auto flat = flatten_parameters(ptrs);
    CHECK(flat.size() == 2 * 3 + 3 + 3 + 1);
    for (auto& v : flat) v *= 2.0;
    assign_parameters(ptrs, flat);
    CHECK(flatten_parameters(ptrs) == flat);
    flat.pop_back();
    CHECK_THROWS_AS(assign_parameters(ptrs, flat), InvalidArgument);
  }

  TEST_CASE("checkpoint json is bit exact") {
    Rng rng(30);
    const DenseNet net = random_net({3, 4, 2}, Activation::tanh, rng);
    const DenseNet back = checkpoint_from_json(checkpoint_to_json(net));
    CHECK(back.widths() == net.widths());
    CHECK(back.activation() == net.activation());
    for (std::size_t k = 0; k < net.parameters().size(); ++k) CHECK(back.parameters()[k] == net.parameters()[k]);
  }
}
