#pragma once

// Small dense networks with hand-written reverse-mode gradients.
//
// Batched inputs are matrices with one sample per row. Batched backward passes
// sum per-sample gradients; no averaging happens here, losses apply their own
// 1/|B| factors.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tcmax/rng.hpp"

namespace tcmax {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Activation { relu, tanh };

Activation activation_from_string(const std::string& name);
std::string to_string(Activation act);

/// One array per parameter array of the owning object, same shapes and order.
struct GradientSet {
  std::vector<Matrix> arrays;

  /// All-zero set with the given shapes.
  static GradientSet zeros_like(std::span<const Matrix> params);
  static GradientSet zeros_like(std::span<const Matrix* const> params);

  void set_zero();
  GradientSet& operator+=(const GradientSet& other);
  GradientSet& operator*=(double factor);
  std::size_t size() const;  // total number of scalars
  std::vector<double> flatten() const;
  bool all_finite() const;
};

/// Intermediate values of a batched forward pass, consumed by backward().
struct ForwardTape {
  std::vector<Matrix> activations;  // [0] is the input, back() is the output
  std::vector<Matrix> preactivations;
};

/// Fully connected network: hidden layers use `activation`, the output layer
/// is affine. Parameters are stored as [W0, b0, W1, b1, ...] with W of shape
/// (out, in) and b of shape (out, 1).
class DenseNet {
 public:
  DenseNet() = default;
  DenseNet(std::vector<std::size_t> widths, Activation activation);

  /// Glorot-uniform weights, zero biases.
  static DenseNet glorot(std::vector<std::size_t> widths, Activation activation, Rng& rng);

  const std::vector<std::size_t>& widths() const noexcept { return widths_; }
  Activation activation() const noexcept { return activation_; }
  std::size_t num_layers() const noexcept { return widths_.empty() ? 0 : widths_.size() - 1; }
  std::size_t input_width() const { return widths_.front(); }
  std::size_t output_width() const { return widths_.back(); }

  Matrix& weight(std::size_t layer) { return params_[2 * layer]; }
  const Matrix& weight(std::size_t layer) const { return params_[2 * layer]; }
  Matrix& bias(std::size_t layer) { return params_[2 * layer + 1]; }
  const Matrix& bias(std::size_t layer) const { return params_[2 * layer + 1]; }

  std::vector<Matrix>& parameters() noexcept { return params_; }
  const std::vector<Matrix>& parameters() const noexcept { return params_; }

  Vector forward(const Vector& input) const;
  Matrix forward(const Matrix& inputs) const;
  ForwardTape forward_tape(const Matrix& inputs) const;

  /// Accumulates d<outputs, cotangent>/d(params) into `grads` (a slice with one
  /// array per parameter array) and returns the cotangent of the inputs.
  Matrix backward(const ForwardTape& tape, const Matrix& cotangent, std::span<Matrix> grads) const;

 private:
  void check_input(const Matrix& inputs) const;

  std::vector<std::size_t> widths_;
  Activation activation_ = Activation::relu;
  std::vector<Matrix> params_;
};

/// Exact parameter gradients of <forward(input), cotangent>.
GradientSet backward(const DenseNet& net, const Vector& input, const Vector& cotangent);

struct OptimizerState {
  double learning_rate = 1e-3;
  double momentum = 0.9;
  double weight_decay = 0.0;
  std::vector<Matrix> velocity;  // lazily shaped on first step

  OptimizerState() = default;
  OptimizerState(double lr, double momentum, double weight_decay);
};

/// v <- momentum*v + g + weight_decay*p ; p <- p - lr*v.
void sgd_step(std::span<Matrix* const> params, const GradientSet& grads, OptimizerState& state);
void sgd_step(DenseNet& net, const GradientSet& grads, OptimizerState& state);

/// Max-shifted log(sum(exp(values))).
double log_sum_exp(std::span<const double> values);
double log_sum_exp(const Eigen::Ref<const Vector>& values);

/// Row-wise softmax of a logit matrix.
Matrix softmax_rows(const Matrix& logits);

/// Flat copy of all parameters in storage order.
std::vector<double> flatten_parameters(std::span<const Matrix* const> params);
void assign_parameters(std::span<Matrix* const> params, std::span<const double> flat);

// Checkpoints: JSON with widths, activation tag and hex-float parameter arrays.
std::string checkpoint_to_json(const DenseNet& net);
DenseNet checkpoint_from_json(const std::string& text);

namespace testing {

/// Adds `offset` to every log_sum_exp result while alive. Fault injection for
/// the verification suite only; not for concurrent use.
class ScopedLseFault {
 public:
  explicit ScopedLseFault(double offset);
  ~ScopedLseFault();
  ScopedLseFault(const ScopedLseFault&) = delete;
  ScopedLseFault& operator=(const ScopedLseFault&) = delete;

 private:
  double previous_;
};

}  // namespace testing
}  // namespace tcmax
