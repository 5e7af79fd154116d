#include "tcmax/model.hpp"

#include <cmath>

#include "tcmax/error.hpp"

namespace tcmax {

HeadKind head_kind_from_string(const std::string& name) {
  if (name == "concat_mlp") return HeadKind::concat_mlp;
  if (name == "linear_sum") return HeadKind::linear_sum;
  if (name == "shared_linear") return HeadKind::shared_linear;
  throw InvalidArgument("unknown head '" + name + "' (expected concat_mlp, linear_sum or shared_linear)");
}

std::string to_string(HeadKind kind) {
  switch (kind) {
    case HeadKind::concat_mlp: return "concat_mlp";
    case HeadKind::linear_sum: return "linear_sum";
    case HeadKind::shared_linear: return "shared_linear";
  }
  return "?";
}

// --- Batch / TupleIndex -----------------------------------------------------

void Batch::validate() const {
  if (inputs.empty()) throw InvalidArgument("batch has no modalities");
  for (const auto& x : inputs)
    if (static_cast<std::size_t>(x.rows()) != labels.size())
      throw InvalidArgument("batch modalities and labels have different row counts");
}

Batch Batch::select(std::span<const std::size_t> indices) const {
  Batch out;
  out.inputs.reserve(inputs.size());
  for (const auto& x : inputs) {
    Matrix rows(static_cast<Eigen::Index>(indices.size()), x.cols());
    for (std::size_t i = 0; i < indices.size(); ++i) rows.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(indices[i]));
    out.inputs.push_back(std::move(rows));
  }
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) out.labels.push_back(labels[i]);
  return out;
}

TupleIndex TupleIndex::diagonal(std::size_t n, std::size_t arity) {
  TupleIndex t{arity, {}};
  t.flat.reserve(n * arity);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t m = 0; m < arity; ++m) t.flat.push_back(i);
  return t;
}

TupleIndex TupleIndex::all(std::size_t n, std::size_t arity) {
  TupleIndex t{arity, {}};
  std::size_t count = 1;
  for (std::size_t m = 0; m < arity; ++m) count *= n;
  t.flat.reserve(count * arity);
  std::vector<std::size_t> cur(arity, 0);
  for (std::size_t k = 0; k < count; ++k) {
    t.flat.insert(t.flat.end(), cur.begin(), cur.end());
    for (std::size_t m = arity; m-- > 0;) {
      if (++cur[m] < n) break;
      cur[m] = 0;
    }
  }
  return t;
}

// --- MultimodalModel --------------------------------------------------------

MultimodalModel::MultimodalModel(std::vector<DenseNet> encoders, Head head, std::size_t num_classes)
    : encoders_(std::move(encoders)), head_(std::move(head)), num_classes_(num_classes) {
  if (encoders_.empty()) throw InvalidArgument("model needs at least one modality");
  if (num_classes_ == 0) throw InvalidArgument("model needs at least one class");
  const std::size_t m = encoders_.size();
  switch (head_.kind) {
    case HeadKind::concat_mlp: {
      std::size_t total = 0;
      for (const auto& e : encoders_) total += e.output_width();
      if (head_.mlp.input_width() != total)
        throw InvalidArgument("concat head input width does not match the summed embedding widths");
      if (head_.mlp.output_width() != num_classes_)
        throw InvalidArgument("head output width does not match the number of classes");
      break;
    }
    case HeadKind::linear_sum:
    case HeadKind::shared_linear: {
      const std::size_t expected = head_.kind == HeadKind::linear_sum ? m : 1;
      if (head_.weights.size() != expected) throw InvalidArgument("linear head has the wrong number of weight matrices");
      for (std::size_t k = 0; k < m; ++k) {
        const Matrix& w = head_.weights[head_.kind == HeadKind::linear_sum ? k : 0];
        if (static_cast<std::size_t>(w.rows()) != num_classes_ ||
            static_cast<std::size_t>(w.cols()) != encoders_[k].output_width())
          throw InvalidArgument("linear head weight shape does not match encoder " + std::to_string(k));
      }
      if (static_cast<std::size_t>(head_.bias.rows()) != num_classes_ || head_.bias.cols() != 1)
        throw InvalidArgument("linear head bias must have one entry per class");
      break;
    }
  }
}

MultimodalModel MultimodalModel::create(const ModelConfig& config, std::uint64_t seed) {
  if (config.input_dims.empty()) throw InvalidArgument("model config has no modalities");
  Rng root(seed);
  std::vector<DenseNet> encoders;
  for (std::size_t m = 0; m < config.input_dims.size(); ++m) {
    std::vector<std::size_t> widths{config.input_dims[m]};
    widths.insert(widths.end(), config.encoder_hidden.begin(), config.encoder_hidden.end());
    widths.push_back(config.embed_dim);
    Rng rng = root.split(m);
    encoders.push_back(DenseNet::glorot(std::move(widths), config.activation, rng));
  }
  Head head;
  head.kind = config.head;
  Rng head_rng = root.split(1000);
  const auto c = static_cast<Eigen::Index>(config.num_classes);
  const auto e = static_cast<Eigen::Index>(config.embed_dim);
  auto glorot_matrix = [&](Eigen::Index rows, Eigen::Index cols) {
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Matrix w(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < rows; ++i) w(i, j) = (2.0 * head_rng.uniform() - 1.0) * limit;
    return w;
  };
  switch (config.head) {
    case HeadKind::concat_mlp: {
      std::vector<std::size_t> widths{config.embed_dim * config.input_dims.size()};
      widths.insert(widths.end(), config.head_hidden.begin(), config.head_hidden.end());
      widths.push_back(config.num_classes);
      head.mlp = DenseNet::glorot(std::move(widths), config.activation, head_rng);
      break;
    }
    case HeadKind::linear_sum:
      for (std::size_t m = 0; m < config.input_dims.size(); ++m) head.weights.push_back(glorot_matrix(c, e));
      head.bias = Matrix::Zero(c, 1);
      break;
    case HeadKind::shared_linear:
      head.weights.push_back(glorot_matrix(c, e));
      head.bias = Matrix::Zero(c, 1);
      break;
  }
  return MultimodalModel(std::move(encoders), std::move(head), config.num_classes);
}

std::vector<Matrix*> MultimodalModel::parameters() {
  std::vector<Matrix*> out;
  for (auto& e : encoders_)
    for (auto& p : e.parameters()) out.push_back(&p);
  if (head_.kind == HeadKind::concat_mlp) {
    for (auto& p : head_.mlp.parameters()) out.push_back(&p);
  } else {
    for (auto& w : head_.weights) out.push_back(&w);
    out.push_back(&head_.bias);
  }
  return out;
}

std::vector<const Matrix*> MultimodalModel::parameters() const {
  auto refs = const_cast<MultimodalModel*>(this)->parameters();
  return {refs.begin(), refs.end()};
}

GradientSet MultimodalModel::zero_gradients() const {
  const auto refs = parameters();
  return GradientSet::zeros_like(std::span<const Matrix* const>(refs));
}

std::size_t MultimodalModel::encoder_offset(std::size_t m) const {
  std::size_t off = 0;
  for (std::size_t k = 0; k < m; ++k) off += encoders_[k].parameters().size();
  return off;
}

std::size_t MultimodalModel::head_offset() const { return encoder_offset(encoders_.size()); }

Encoded MultimodalModel::encode(const Batch& batch) const {
  batch.validate();
  if (batch.num_modalities() != num_modalities())
    throw InvalidArgument("batch has " + std::to_string(batch.num_modalities()) + " modalities, model expects " +
                          std::to_string(num_modalities()));
  Encoded out;
  for (std::size_t m = 0; m < num_modalities(); ++m) {
    out.tapes.push_back(encoders_[m].forward_tape(batch.inputs[m]));
    out.z.push_back(out.tapes.back().activations.back());
  }
  return out;
}

Matrix MultimodalModel::modality_logits(const std::vector<Matrix>& z, std::size_t modality) const {
  if (modality >= num_modalities()) throw InvalidArgument("modality index out of range");
  const Matrix& zm = z[modality];
  if (head_.kind == HeadKind::concat_mlp) {
    Matrix x = Matrix::Zero(zm.rows(), static_cast<Eigen::Index>(head_.mlp.input_width()));
    Eigen::Index col = 0;
    for (std::size_t m = 0; m < modality; ++m) col += z[m].cols();
    x.middleCols(col, zm.cols()) = zm;
    return head_.mlp.forward(x);
  }
  const Matrix& w = head_.weights[head_.kind == HeadKind::linear_sum ? modality : 0];
  Matrix logits = zm * w.transpose();
  logits.rowwise() += (head_.bias.col(0) / static_cast<double>(num_modalities())).transpose();
  return logits;
}

Matrix MultimodalModel::tuple_logits(const std::vector<Matrix>& z, const TupleIndex& tuples) const {
  if (z.size() != num_modalities() || tuples.arity != num_modalities())
    throw InvalidArgument("tuple arity does not match the number of modalities");
  const auto count = static_cast<Eigen::Index>(tuples.size());
  if (head_.kind == HeadKind::concat_mlp) {
    Matrix x(count, static_cast<Eigen::Index>(head_.mlp.input_width()));
    for (Eigen::Index t = 0; t < count; ++t) {
      Eigen::Index col = 0;
      for (std::size_t m = 0; m < z.size(); ++m) {
        x.row(t).segment(col, z[m].cols()) = z[m].row(static_cast<Eigen::Index>(tuples.at(static_cast<std::size_t>(t), m)));
        col += z[m].cols();
      }
    }
    return head_.mlp.forward(x);
  }
  std::vector<Matrix> per;
  for (std::size_t m = 0; m < z.size(); ++m) per.push_back(modality_logits(z, m));
  Matrix out = Matrix::Zero(count, static_cast<Eigen::Index>(num_classes_));
  for (Eigen::Index t = 0; t < count; ++t)
    for (std::size_t m = 0; m < z.size(); ++m)
      out.row(t) += per[m].row(static_cast<Eigen::Index>(tuples.at(static_cast<std::size_t>(t), m)));
  return out;
}

Matrix MultimodalModel::fused_logits(const std::vector<Matrix>& z) const {
  return tuple_logits(z, TupleIndex::diagonal(static_cast<std::size_t>(z.front().rows()), num_modalities()));
}

void MultimodalModel::modality_backward(const std::vector<Matrix>& z, std::size_t modality, const Matrix& dlogits,
                                        GradientSet& grads, std::vector<Matrix>& dz) const {
  if (!decomposable()) throw InvalidArgument("per-modality backward needs a linear head");
  const std::size_t off = head_offset();
  const std::size_t widx = head_.kind == HeadKind::linear_sum ? modality : 0;
  const Matrix& w = head_.weights[widx];
  grads.arrays[off + widx].noalias() += dlogits.transpose() * z[modality];
  grads.arrays[off + head_.weights.size()] +=
      dlogits.colwise().sum().transpose() / static_cast<double>(num_modalities());
  dz[modality].noalias() += dlogits * w;
}

void MultimodalModel::tuple_backward(const std::vector<Matrix>& z, const TupleIndex& tuples, const Matrix& dlogits,
                                     GradientSet& grads, std::vector<Matrix>& dz) const {
  const auto count = static_cast<Eigen::Index>(tuples.size());
  if (dlogits.rows() != count || static_cast<std::size_t>(dlogits.cols()) != num_classes_)
    throw InvalidArgument("tuple cotangent has the wrong shape");
  if (head_.kind == HeadKind::concat_mlp) {
    Matrix x(count, static_cast<Eigen::Index>(head_.mlp.input_width()));
    for (Eigen::Index t = 0; t < count; ++t) {
      Eigen::Index col = 0;
      for (std::size_t m = 0; m < z.size(); ++m) {
        x.row(t).segment(col, z[m].cols()) = z[m].row(static_cast<Eigen::Index>(tuples.at(static_cast<std::size_t>(t), m)));
        col += z[m].cols();
      }
    }
    const auto tape = head_.mlp.forward_tape(x);
    std::span<Matrix> slice(grads.arrays.data() + head_offset(), head_.mlp.parameters().size());
    const Matrix dx = head_.mlp.backward(tape, dlogits, slice);
    for (Eigen::Index t = 0; t < count; ++t) {
      Eigen::Index col = 0;
      for (std::size_t m = 0; m < z.size(); ++m) {
        dz[m].row(static_cast<Eigen::Index>(tuples.at(static_cast<std::size_t>(t), m))) += dx.row(t).segment(col, z[m].cols());
        col += z[m].cols();
      }
    }
    return;
  }
  for (std::size_t m = 0; m < z.size(); ++m) {
    Matrix dm = Matrix::Zero(z[m].rows(), static_cast<Eigen::Index>(num_classes_));
    for (Eigen::Index t = 0; t < count; ++t) dm.row(static_cast<Eigen::Index>(tuples.at(static_cast<std::size_t>(t), m))) += dlogits.row(t);
    modality_backward(z, m, dm, grads, dz);
  }
}

void MultimodalModel::encoder_backward(const Encoded& encoded, const std::vector<Matrix>& dz, GradientSet& grads) const {
  for (std::size_t m = 0; m < num_modalities(); ++m) {
    std::span<Matrix> slice(grads.arrays.data() + encoder_offset(m), encoders_[m].parameters().size());
    encoders_[m].backward(encoded.tapes[m], dz[m], slice);
  }
}

std::vector<Matrix> MultimodalModel::zeros_like(const std::vector<Matrix>& z) {
  std::vector<Matrix> out;
  for (const auto& m : z) out.push_back(Matrix::Zero(m.rows(), m.cols()));
  return out;
}

// --- Tabular realization ----------------------------------------------------

MultimodalModel make_tabular_model(std::span<const std::size_t> alphabets, std::size_t num_classes,
                                   std::span<const double> table) {
  const std::size_t modalities = alphabets.size();
  if (modalities == 0) throw InvalidArgument("tabular model needs at least one modality");
  std::size_t tuples = 1, width = 0;
  for (std::size_t a : alphabets) {
    if (a == 0) throw InvalidArgument("alphabet sizes must be positive");
    tuples *= a;
    width += a;
  }
  if (table.size() != tuples * num_classes) throw InvalidArgument("tabular model table has the wrong size");
  for (double v : table)
    if (!std::isfinite(v)) throw InvalidArgument("tabular model entries must be finite");

  std::vector<DenseNet> encoders;
  for (std::size_t a : alphabets) {
    DenseNet id({a, a}, Activation::relu);
    id.weight(0) = Matrix::Identity(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(a));
    encoders.push_back(std::move(id));
  }
  Head head;
  head.kind = HeadKind::concat_mlp;
  head.mlp = DenseNet({width, tuples, num_classes}, Activation::relu);
  std::vector<std::size_t> symbol(modalities, 0);
  for (std::size_t k = 0; k < tuples; ++k) {
    std::size_t offset = 0;
    for (std::size_t m = 0; m < modalities; ++m) {
      head.mlp.weight(0)(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(offset + symbol[m])) = 1.0;
      offset += alphabets[m];
    }
    head.mlp.bias(0)(static_cast<Eigen::Index>(k), 0) = -static_cast<double>(modalities - 1);
    for (std::size_t y = 0; y < num_classes; ++y)
      head.mlp.weight(1)(static_cast<Eigen::Index>(y), static_cast<Eigen::Index>(k)) = table[k * num_classes + y];
    for (std::size_t m = modalities; m-- > 0;) {
      if (++symbol[m] < alphabets[m]) break;
      symbol[m] = 0;
    }
  }
  return MultimodalModel(std::move(encoders), std::move(head), num_classes);
}

Matrix one_hot_rows(std::span<const std::size_t> symbols, std::size_t width) {
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(symbols.size()), static_cast<Eigen::Index>(width));
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    if (symbols[i] >= width) throw InvalidArgument("symbol out of range for one-hot encoding");
    out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(symbols[i])) = 1.0;
  }
  return out;
}

}  // namespace tcmax
