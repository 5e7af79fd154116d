#pragma once

// Multimodal classifier F(x^1..x^M, y) = f(psi^1(x^1), ..., psi^M(x^M))_y.
//
// Each modality has its own encoder network. The fusion head is one of:
//   concat_mlp     dense net on the concatenated embeddings
//   linear_sum     per-modality affine maps W_m z_m + b/M, logits summed
//   shared_linear  one affine map W z_m + b/M applied to every embedding, summed
//
// The head can be evaluated on arbitrary cross-sample tuples (j_1, ..., j_M),
// which is what the contrastive denominators of the TCMax losses need.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tcmax/nn.hpp"

namespace tcmax {

enum class HeadKind { concat_mlp, linear_sum, shared_linear };

HeadKind head_kind_from_string(const std::string& name);
std::string to_string(HeadKind kind);

/// Aligned per-modality inputs (row i of every matrix is sample i) and labels.
struct Batch {
  std::vector<Matrix> inputs;
  std::vector<std::size_t> labels;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t num_modalities() const noexcept { return inputs.size(); }
  /// Throws InvalidArgument on misaligned rows.
  void validate() const;
  /// Rows `indices` of every modality, in that order.
  Batch select(std::span<const std::size_t> indices) const;
};

/// Flat list of index tuples, `arity` indices per tuple.
struct TupleIndex {
  std::size_t arity = 0;
  std::vector<std::size_t> flat;

  std::size_t size() const noexcept { return arity == 0 ? 0 : flat.size() / arity; }
  std::size_t at(std::size_t tuple, std::size_t modality) const { return flat[tuple * arity + modality]; }

  /// (i, i, ..., i) for i < n.
  static TupleIndex diagonal(std::size_t n, std::size_t arity);
  /// Every tuple in {0..n-1}^arity, row-major.
  static TupleIndex all(std::size_t n, std::size_t arity);
};

struct ModelConfig {
  std::vector<std::size_t> input_dims;       // one per modality
  std::vector<std::size_t> encoder_hidden;   // hidden widths of every encoder
  std::size_t embed_dim = 16;
  HeadKind head = HeadKind::linear_sum;
  std::vector<std::size_t> head_hidden;      // concat_mlp only
  std::size_t num_classes = 2;
  Activation activation = Activation::relu;
};

struct Head {
  HeadKind kind = HeadKind::linear_sum;
  DenseNet mlp;                 // concat_mlp
  std::vector<Matrix> weights;  // linear_sum: one per modality; shared_linear: one
  Matrix bias;                  // (classes, 1), linear heads only
};

/// Embeddings of a batch plus what the encoders need for backward.
struct Encoded {
  std::vector<ForwardTape> tapes;
  std::vector<Matrix> z;  // per modality, (n, embed)
};

class MultimodalModel {
 public:
  MultimodalModel() = default;
  MultimodalModel(std::vector<DenseNet> encoders, Head head, std::size_t num_classes);

  static MultimodalModel create(const ModelConfig& config, std::uint64_t seed);

  std::size_t num_modalities() const noexcept { return encoders_.size(); }
  std::size_t num_classes() const noexcept { return num_classes_; }
  HeadKind head_kind() const noexcept { return head_.kind; }
  bool decomposable() const noexcept { return head_.kind != HeadKind::concat_mlp; }

  const std::vector<DenseNet>& encoders() const noexcept { return encoders_; }
  std::vector<DenseNet>& encoders() noexcept { return encoders_; }
  const Head& head() const noexcept { return head_; }
  Head& head() noexcept { return head_; }

  /// Parameter arrays in gradient order: encoder 0, ..., encoder M-1, head.
  std::vector<Matrix*> parameters();
  std::vector<const Matrix*> parameters() const;
  GradientSet zero_gradients() const;

  Encoded encode(const Batch& batch) const;

  /// Head logits for each tuple of embedding rows, shape (tuples, classes).
  Matrix tuple_logits(const std::vector<Matrix>& z, const TupleIndex& tuples) const;
  /// Fused logits of the aligned samples, shape (n, classes).
  Matrix fused_logits(const std::vector<Matrix>& z) const;
  /// Per-modality prediction logits. Linear heads use f^(m); concat_mlp feeds
  /// zeros in place of every other modality's embedding.
  Matrix modality_logits(const std::vector<Matrix>& z, std::size_t modality) const;

  /// Backward of tuple_logits: accumulates head gradients into `grads` and
  /// embedding cotangents into `dz` (one (n, embed) matrix per modality).
  void tuple_backward(const std::vector<Matrix>& z, const TupleIndex& tuples, const Matrix& dlogits,
                      GradientSet& grads, std::vector<Matrix>& dz) const;
  /// Backward of modality_logits for a decomposable head.
  void modality_backward(const std::vector<Matrix>& z, std::size_t modality, const Matrix& dlogits,
                         GradientSet& grads, std::vector<Matrix>& dz) const;
  /// Backward through the encoders given embedding cotangents.
  void encoder_backward(const Encoded& encoded, const std::vector<Matrix>& dz, GradientSet& grads) const;

  /// Zero cotangents shaped like `z`.
  static std::vector<Matrix> zeros_like(const std::vector<Matrix>& z);

 private:
  std::size_t head_offset() const;
  std::size_t encoder_offset(std::size_t m) const;

  std::vector<DenseNet> encoders_;
  Head head_;
  std::size_t num_classes_ = 0;
};

/// Model whose F(x^1..x^M, y) equals table[(s_1, ..., s_M, y)] for one-hot
/// inputs (symbol s_m of modality m). Encoders are identities; the concat_mlp
/// head has one ReLU unit per symbol tuple. `table` is row-major over
/// (alphabet_1, ..., alphabet_M, classes).
MultimodalModel make_tabular_model(std::span<const std::size_t> alphabets, std::size_t num_classes,
                                   std::span<const double> table);

/// Row vector with a one at `symbol`.
Matrix one_hot_rows(std::span<const std::size_t> symbols, std::size_t width);

}  // namespace tcmax
