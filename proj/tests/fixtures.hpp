#pragma once

// Random models and batches, a plain-loop re-evaluation of F and a
// central-difference gradient check, shared by the loss tests and the
// acceptance binary.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "tcmax/losses.hpp"
#include "tcmax/model.hpp"

namespace fixtures {

using namespace tcmax;

inline std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline MultimodalModel random_model(Rng& rng, HeadKind head, std::size_t modalities, std::size_t classes,
                                    Activation act = Activation::tanh) {
  ModelConfig mc;
  for (std::size_t m = 0; m < modalities; ++m) mc.input_dims.push_back(pick(rng, 2, 4));
  mc.encoder_hidden = {pick(rng, 2, 5)};
  mc.embed_dim = pick(rng, 2, 4);
  mc.head = head;
  if (head == HeadKind::concat_mlp) mc.head_hidden = {pick(rng, 3, 6)};
  mc.num_classes = classes;
  mc.activation = act;
  auto model = MultimodalModel::create(mc, rng());
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (Matrix* p : model.parameters())
    for (Eigen::Index k = 0; k < p->size(); ++k) p->data()[k] = u(rng);
  return model;
}

inline Batch random_batch(Rng& rng, const MultimodalModel& model, std::size_t n) {
  std::normal_distribution<double> normal;
  Batch b;
  for (const auto& e : model.encoders()) {
    Matrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(e.input_width()));
    for (Eigen::Index k = 0; k < x.size(); ++k) x.data()[k] = normal(rng);
    b.inputs.push_back(std::move(x));
  }
  for (std::size_t i = 0; i < n; ++i) b.labels.push_back(pick(rng, 0, model.num_classes() - 1));
  return b;
}

inline std::vector<oracle::Layer> layers_of(const DenseNet& net) {
  std::vector<oracle::Layer> out;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const Matrix& W = net.weight(l);
    oracle::Layer L;
    L.in = static_cast<std::size_t>(W.cols());
    L.out = static_cast<std::size_t>(W.rows());
    for (std::size_t o = 0; o < L.out; ++o) {
      for (std::size_t i = 0; i < L.in; ++i) L.w.push_back(W(static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(i)));
      L.b.push_back(net.bias(l)(static_cast<Eigen::Index>(o), 0));
    }
    out.push_back(std::move(L));
  }
  return out;
}

// F(x^1_{j_1}, ..., x^M_{j_M}, y) recomputed from the raw parameters.
struct OracleModel {
  const MultimodalModel& model;
  const std::vector<Matrix>& inputs;

  std::vector<long double> embed(std::size_t m, std::size_t row) const {
    const auto& enc = model.encoders()[m];
    std::vector<long double> x;
    for (Eigen::Index c = 0; c < inputs[m].cols(); ++c) x.push_back(inputs[m](static_cast<Eigen::Index>(row), c));
    return oracle::forward(layers_of(enc), x, enc.activation() == Activation::tanh);
  }

  std::vector<long double> logits(const std::vector<std::size_t>& rows) const {
    const auto& head = model.head();
    const std::size_t M = model.num_modalities();
    const std::size_t C = model.num_classes();
    if (head.kind == HeadKind::concat_mlp) {
      std::vector<long double> cat;
      for (std::size_t m = 0; m < M; ++m)
        for (auto v : embed(m, rows[m])) cat.push_back(v);
      return oracle::forward(layers_of(head.mlp), cat, head.mlp.activation() == Activation::tanh);
    }
    std::vector<long double> out(C, 0.0L);
    for (std::size_t m = 0; m < M; ++m) {
      const auto z = embed(m, rows[m]);
      const Matrix& W = head.kind == HeadKind::linear_sum ? head.weights[m] : head.weights[0];
      for (std::size_t y = 0; y < C; ++y) {
        long double s = head.bias(static_cast<Eigen::Index>(y), 0) / static_cast<long double>(M);
        for (std::size_t k = 0; k < z.size(); ++k) s += W(static_cast<Eigen::Index>(y), static_cast<Eigen::Index>(k)) * z[k];
        out[y] += s;
      }
    }
    return out;
  }

  // Per-modality prediction logits for a linear head.
  std::vector<double> modality(std::size_t m, std::size_t row) const {
    const auto& head = model.head();
    const auto z = embed(m, row);
    const Matrix& W = head.kind == HeadKind::linear_sum ? head.weights[m] : head.weights[0];
    std::vector<double> out;
    for (std::size_t y = 0; y < model.num_classes(); ++y) {
      long double s = head.bias(static_cast<Eigen::Index>(y), 0) / static_cast<long double>(model.num_modalities());
      for (std::size_t k = 0; k < z.size(); ++k) s += W(static_cast<Eigen::Index>(y), static_cast<Eigen::Index>(k)) * z[k];
      out.push_back(static_cast<double>(s));
    }
    return out;
  }
};

inline std::vector<double> to_double(const std::vector<long double>& v) { return {v.begin(), v.end()}; }

inline long double oracle_tcmax(const MultimodalModel& model, const Batch& batch) {
  OracleModel o{model, batch.inputs};
  return oracle::tcmax_bruteforce(batch.size(), model.num_modalities(), model.num_classes(), batch.labels,
                                  [&](const std::vector<std::size_t>& t, std::size_t y) { return o.logits(t)[y]; });
}

// Central differences compared component-wise against the analytic gradient.
template <class Loss>
double fd_error(MultimodalModel& model, Loss&& loss) {
  const auto analytic = loss(model).grads;
  auto params = model.parameters();
  double worst = 0.0;
  const double h = 1e-5;
  for (std::size_t a = 0; a < params.size(); ++a) {
    for (Eigen::Index k = 0; k < params[a]->size(); ++k) {
      double& p = params[a]->data()[k];
      const double saved = p;
      p = saved + h;
      const double up = loss(model).value;
      p = saved - h;
      const double down = loss(model).value;
      p = saved;
      const double fd = (up - down) / (2.0 * h);
      const double g = analytic.arrays[a].data()[k];
      worst = std::max(worst, std::abs(g - fd) / std::max({std::abs(g), std::abs(fd), 1e-5}));
    }
  }
  return worst;
}

}  // namespace fixtures
