#include "tcmax/nn.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>

#include <json.hpp>

#include "tcmax/error.hpp"

namespace tcmax {
namespace {

std::atomic<double> g_lse_fault{0.0};

void check_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw NumericalError(std::string(what) + " contains non-finite values");
}

std::string hex_float(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

double parse_hex_float(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') throw InvalidArgument("bad float literal '" + s + "' in checkpoint");
  return v;
}

}  // namespace

Activation activation_from_string(const std::string& name) {
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  throw InvalidArgument("unknown activation '" + name + "' (expected relu or tanh)");
}

std::string to_string(Activation act) { return act == Activation::relu ? "relu" : "tanh"; }

// --- GradientSet ------------------------------------------------------------

GradientSet GradientSet::zeros_like(std::span<const Matrix> params) {
  GradientSet g;
  g.arrays.reserve(params.size());
  for (const auto& p : params) g.arrays.push_back(Matrix::Zero(p.rows(), p.cols()));
  return g;
}

GradientSet GradientSet::zeros_like(std::span<const Matrix* const> params) {
  GradientSet g;
  g.arrays.reserve(params.size());
  for (const Matrix* p : params) g.arrays.push_back(Matrix::Zero(p->rows(), p->cols()));
  return g;
}

void GradientSet::set_zero() {
  for (auto& a : arrays) a.setZero();
}

GradientSet& GradientSet::operator+=(const GradientSet& other) {
  if (other.arrays.size() != arrays.size()) throw InvalidArgument("gradient sets have different layouts");
  for (std::size_t i = 0; i < arrays.size(); ++i) arrays[i] += other.arrays[i];
  return *this;
}

GradientSet& GradientSet::operator*=(double factor) {
  for (auto& a : arrays) a *= factor;
  return *this;
}

std::size_t GradientSet::size() const {
  std::size_t n = 0;
  for (const auto& a : arrays) n += static_cast<std::size_t>(a.size());
  return n;
}

std::vector<double> GradientSet::flatten() const {
  std::vector<double> out;
  out.reserve(size());
  for (const auto& a : arrays) out.insert(out.end(), a.data(), a.data() + a.size());
  return out;
}

bool GradientSet::all_finite() const {
  return std::all_of(arrays.begin(), arrays.end(), [](const Matrix& a) { return a.allFinite(); });
}

// --- DenseNet ---------------------------------------------------------------

DenseNet::DenseNet(std::vector<std::size_t> widths, Activation activation)
    : widths_(std::move(widths)), activation_(activation) {
  if (widths_.size() < 2) throw InvalidArgument("a dense net needs at least an input and an output width");
  for (std::size_t w : widths_)
    if (w == 0) throw InvalidArgument("layer widths must be positive");
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    params_.push_back(Matrix::Zero(widths_[l + 1], widths_[l]));
    params_.push_back(Matrix::Zero(widths_[l + 1], 1));
  }
}

DenseNet DenseNet::glorot(std::vector<std::size_t> widths, Activation activation, Rng& rng) {
  DenseNet net(std::move(widths), activation);
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const double fan = static_cast<double>(net.widths_[l] + net.widths_[l + 1]);
    const double limit = std::sqrt(6.0 / fan);
    Matrix& w = net.weight(l);
    for (Eigen::Index c = 0; c < w.cols(); ++c)
      for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = (2.0 * rng.uniform() - 1.0) * limit;
  }
  return net;
}

void DenseNet::check_input(const Matrix& inputs) const {
  if (static_cast<std::size_t>(inputs.cols()) != input_width())
    throw InvalidArgument("input width " + std::to_string(inputs.cols()) + " does not match net input width " +
                          std::to_string(input_width()));
  if (!inputs.allFinite()) throw InvalidArgument("non-finite network input");
}

Vector DenseNet::forward(const Vector& input) const {
  Matrix row = input.transpose();
  return forward(row).row(0).transpose();
}

Matrix DenseNet::forward(const Matrix& inputs) const {
  check_input(inputs);
  Matrix a = inputs;
  for (std::size_t l = 0; l < num_layers(); ++l) {
    Matrix z = a * weight(l).transpose();
    z.rowwise() += bias(l).col(0).transpose();
    if (l + 1 < num_layers()) {
      if (activation_ == Activation::relu)
        a = z.cwiseMax(0.0);
      else
        a = z.array().tanh().matrix();
    } else {
      a = std::move(z);
    }
  }
  return a;
}

ForwardTape DenseNet::forward_tape(const Matrix& inputs) const {
  check_input(inputs);
  ForwardTape tape;
  tape.activations.reserve(num_layers() + 1);
  tape.preactivations.reserve(num_layers());
  tape.activations.push_back(inputs);
  for (std::size_t l = 0; l < num_layers(); ++l) {
    Matrix z = tape.activations.back() * weight(l).transpose();
    z.rowwise() += bias(l).col(0).transpose();
    Matrix a;
    if (l + 1 < num_layers())
      a = activation_ == Activation::relu ? Matrix(z.cwiseMax(0.0)) : Matrix(z.array().tanh().matrix());
    else
      a = z;
    tape.preactivations.push_back(std::move(z));
    tape.activations.push_back(std::move(a));
  }
  return tape;
}

Matrix DenseNet::backward(const ForwardTape& tape, const Matrix& cotangent, std::span<Matrix> grads) const {
  if (grads.size() != params_.size()) throw InvalidArgument("gradient slice does not match parameter count");
  if (tape.activations.size() != num_layers() + 1) throw InvalidArgument("tape does not belong to this net");
  const Matrix& out = tape.activations.back();
  if (cotangent.rows() != out.rows() || cotangent.cols() != out.cols())
    throw InvalidArgument("cotangent shape does not match network output");

  Matrix delta = cotangent;
  for (std::size_t l = num_layers(); l-- > 0;) {
    if (l + 1 < num_layers()) {
      const Matrix& z = tape.preactivations[l];
      if (activation_ == Activation::relu) {
        // Subgradient at 0 is taken as 0.
        delta = delta.cwiseProduct((z.array() > 0.0).cast<double>().matrix());
      } else {
        const Matrix& a = tape.activations[l + 1];
        delta = delta.cwiseProduct((1.0 - a.array().square()).matrix());
      }
    }
    grads[2 * l].noalias() += delta.transpose() * tape.activations[l];
    grads[2 * l + 1] += delta.colwise().sum().transpose();
    delta = delta * weight(l);
  }
  return delta;
}

GradientSet backward(const DenseNet& net, const Vector& input, const Vector& cotangent) {
  if (static_cast<std::size_t>(cotangent.size()) != net.output_width())
    throw InvalidArgument("cotangent length does not match network output width");
  GradientSet grads = GradientSet::zeros_like(std::span<const Matrix>(net.parameters()));
  const auto tape = net.forward_tape(input.transpose());
  net.backward(tape, cotangent.transpose(), grads.arrays);
  return grads;
}

// --- Optimizer --------------------------------------------------------------

OptimizerState::OptimizerState(double lr, double mom, double wd)
    : learning_rate(lr), momentum(mom), weight_decay(wd) {
  if (!(lr > 0.0)) throw InvalidArgument("learning rate must be positive");
  if (!(mom >= 0.0 && mom < 1.0)) throw InvalidArgument("momentum must lie in [0, 1)");
  if (!(wd >= 0.0)) throw InvalidArgument("weight decay must be non-negative");
}

void sgd_step(std::span<Matrix* const> params, const GradientSet& grads, OptimizerState& state) {
  if (grads.arrays.size() != params.size()) throw InvalidArgument("gradient set does not match parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads.arrays[i].rows() != params[i]->rows() || grads.arrays[i].cols() != params[i]->cols())
      throw InvalidArgument("gradient shape does not match parameter shape");
    check_finite(grads.arrays[i], "gradient");
  }
  if (state.velocity.empty()) {
    for (const Matrix* p : params) state.velocity.push_back(Matrix::Zero(p->rows(), p->cols()));
  } else if (state.velocity.size() != params.size()) {
    throw InvalidArgument("optimizer velocity does not match parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& v = state.velocity[i];
    v = state.momentum * v + grads.arrays[i];
    if (state.weight_decay != 0.0) v += state.weight_decay * *params[i];
    *params[i] -= state.learning_rate * v;
  }
}

void sgd_step(DenseNet& net, const GradientSet& grads, OptimizerState& state) {
  std::vector<Matrix*> refs;
  for (auto& p : net.parameters()) refs.push_back(&p);
  sgd_step(refs, grads, state);
}

// --- Numerics ---------------------------------------------------------------

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) throw InvalidArgument("log_sum_exp of an empty vector");
  const double top = *std::max_element(values.begin(), values.end());
  if (std::isinf(top)) return top + g_lse_fault.load(std::memory_order_relaxed);
  double total = 0.0;
  for (double v : values) total += std::exp(v - top);
  return top + std::log(total) + g_lse_fault.load(std::memory_order_relaxed);
}

double log_sum_exp(const Eigen::Ref<const Vector>& values) {
  return log_sum_exp(std::span<const double>(values.data(), static_cast<std::size_t>(values.size())));
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double top = logits.row(r).maxCoeff();
    out.row(r) = (logits.row(r).array() - top).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

std::vector<double> flatten_parameters(std::span<const Matrix* const> params) {
  std::vector<double> out;
  for (const Matrix* p : params) out.insert(out.end(), p->data(), p->data() + p->size());
  return out;
}

void assign_parameters(std::span<Matrix* const> params, std::span<const double> flat) {
  std::size_t offset = 0;
  for (Matrix* p : params) {
    const auto n = static_cast<std::size_t>(p->size());
    if (offset + n > flat.size()) throw InvalidArgument("flat parameter vector too short");
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), n, p->data());
    offset += n;
  }
  if (offset != flat.size()) throw InvalidArgument("flat parameter vector too long");
}

// --- Checkpoints ------------------------------------------------------------

std::string checkpoint_to_json(const DenseNet& net) {
  nlohmann::json doc;
  doc["widths"] = net.widths();
  doc["activation"] = to_string(net.activation());
  nlohmann::json arrays = nlohmann::json::array();
  for (const auto& p : net.parameters()) {
    nlohmann::json values = nlohmann::json::array();
    for (Eigen::Index i = 0; i < p.size(); ++i) values.push_back(hex_float(p.data()[i]));
    arrays.push_back(std::move(values));
  }
  doc["parameters"] = std::move(arrays);
  return doc.dump();
}

DenseNet checkpoint_from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw InvalidArgument(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  DenseNet net(doc.at("widths").get<std::vector<std::size_t>>(),
               activation_from_string(doc.at("activation").get<std::string>()));
  const auto& arrays = doc.at("parameters");
  if (arrays.size() != net.parameters().size()) throw InvalidArgument("checkpoint has the wrong number of arrays");
  for (std::size_t i = 0; i < arrays.size(); ++i) {
    Matrix& p = net.parameters()[i];
    if (arrays[i].size() != static_cast<std::size_t>(p.size()))
      throw InvalidArgument("checkpoint array " + std::to_string(i) + " has the wrong length");
    for (std::size_t j = 0; j < arrays[i].size(); ++j) p.data()[j] = parse_hex_float(arrays[i][j].get<std::string>());
    if (!p.allFinite()) throw InvalidArgument("checkpoint contains non-finite parameters");
  }
  return net;
}

namespace testing {

ScopedLseFault::ScopedLseFault(double offset) : previous_(g_lse_fault.exchange(offset)) {}
ScopedLseFault::~ScopedLseFault() { g_lse_fault.store(previous_); }

}  // namespace testing
}  // namespace tcmax
