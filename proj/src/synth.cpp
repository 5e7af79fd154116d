#include "tcmax/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <json.hpp>

#include "tcmax/error.hpp"

namespace tcmax {
namespace {

std::vector<std::size_t> balanced_labels(std::size_t n, std::size_t classes, Rng& rng) {
  std::vector<std::size_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = i % classes;
  std::shuffle(labels.begin(), labels.end(), rng);
  return labels;
}

nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const nlohmann::json& rows) {
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto d = n == 0 ? Eigen::Index{0} : static_cast<Eigen::Index>(rows[0].size());
  Matrix m(n, d);
  for (Eigen::Index r = 0; r < n; ++r) {
    if (static_cast<Eigen::Index>(rows[static_cast<std::size_t>(r)].size()) != d)
      throw InvalidArgument("ragged feature matrix in dataset file");
    for (Eigen::Index c = 0; c < d; ++c) m(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

nlohmann::json batch_to_json(const Batch& b) {
  nlohmann::json j;
  j["labels"] = b.labels;
  j["modalities"] = nlohmann::json::array();
  for (const auto& x : b.inputs) j["modalities"].push_back(matrix_to_json(x));
  return j;
}

Batch batch_from_json(const nlohmann::json& j) {
  Batch b;
  b.labels = j.at("labels").get<std::vector<std::size_t>>();
  for (const auto& m : j.at("modalities")) b.inputs.push_back(matrix_from_json(m));
  b.validate();
  return b;
}

}  // namespace

GeneratorKind generator_kind_from_string(const std::string& name) {
  if (name == "gaussian_clusters") return GeneratorKind::gaussian_clusters;
  if (name == "discrete_table") return GeneratorKind::discrete_table;
  throw InvalidArgument("unknown generator '" + name + "' (expected gaussian_clusters or discrete_table)");
}

std::string to_string(GeneratorKind kind) {
  return kind == GeneratorKind::gaussian_clusters ? "gaussian_clusters" : "discrete_table";
}

GeneratorConfig GeneratorConfig::competition_default() {
  GeneratorConfig c;
  c.kind = GeneratorKind::gaussian_clusters;
  c.num_classes = 4;
  c.modalities = {ModalitySpec{8, 3.0, 1.0}, ModalitySpec{8, 0.8, 1.0}};
  c.coupling = 0.5;
  c.train_size = 2000;
  c.test_size = 1000;
  return c;
}

void GeneratorConfig::validate() const {
  if (train_size == 0 || test_size == 0) throw InvalidArgument("train and test sizes must be at least 1");
  if (kind == GeneratorKind::gaussian_clusters) {
    if (num_classes < 2) throw InvalidArgument("need at least 2 classes");
    if (modalities.empty()) throw InvalidArgument("need at least one modality");
    for (const auto& m : modalities) {
      if (m.dim == 0) throw InvalidArgument("modality dimension must be positive");
      if (!(m.signal >= 0.0) || !std::isfinite(m.signal)) throw InvalidArgument("signal strength must be >= 0");
      if (!(m.noise > 0.0) || !std::isfinite(m.noise)) throw InvalidArgument("noise scale must be > 0");
    }
    if (!(coupling >= 0.0 && coupling <= 1.0)) throw InvalidArgument("coupling must lie in [0, 1]");
  } else {
    if (!table) throw InvalidArgument("discrete_table generator needs a table");
    if (table->num_variables() < 2) throw InvalidArgument("table needs at least one modality and a label");
    if (table->num_cells() > kMaxDiscreteCells)
      throw InvalidArgument("discrete table exceeds " + std::to_string(kMaxDiscreteCells) + " cells");
  }
}

LabeledDataset generate(const GeneratorConfig& config) {
  config.validate();
  LabeledDataset out;
  out.config = config;
  Rng root(config.seed);

  if (config.kind == GeneratorKind::discrete_table) {
    const auto& table = *config.table;
    TupleSource train_src(table, root.split(3)());
    TupleSource test_src(table, root.split(4)());
    out.train_outcomes = train_src.draw(config.train_size);
    out.test_outcomes = test_src.draw(config.test_size);
    out.train = batch_from_outcomes(out.train_outcomes, table.alphabet_sizes());
    out.test = batch_from_outcomes(out.test_outcomes, table.alphabet_sizes());
    out.ground_truth = table;
    out.config.num_classes = table.alphabet_sizes().back();
    return out;
  }

  const std::size_t modalities = config.modalities.size();
  std::size_t latent = 0;
  for (const auto& m : config.modalities) latent = std::max(latent, m.dim);
  std::normal_distribution<double> normal(0.0, 1.0);

  // Class means on the unit sphere and fixed latent projections, frozen per seed.
  Rng mean_rng = root.split(1);
  Rng proj_rng = root.split(2);
  std::vector<Matrix> means, projections;
  for (const auto& spec : config.modalities) {
    const auto d = static_cast<Eigen::Index>(spec.dim);
    Matrix mu(static_cast<Eigen::Index>(config.num_classes), d);
    for (Eigen::Index c = 0; c < mu.rows(); ++c) {
      for (Eigen::Index k = 0; k < d; ++k) mu(c, k) = normal(mean_rng);
      mu.row(c).normalize();
    }
    means.push_back(std::move(mu));
    Matrix p(d, static_cast<Eigen::Index>(latent));
    for (Eigen::Index r = 0; r < p.rows(); ++r)
      for (Eigen::Index k = 0; k < p.cols(); ++k) p(r, k) = normal(proj_rng) / std::sqrt(static_cast<double>(latent));
    projections.push_back(std::move(p));
  }

  auto draw_split = [&](std::size_t n, Rng rng) {
    Batch b;
    b.labels = balanced_labels(n, config.num_classes, rng);
    for (const auto& spec : config.modalities) b.inputs.push_back(Matrix(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(spec.dim)));
    const double own = std::sqrt(1.0 - config.coupling * config.coupling);
    Vector s(static_cast<Eigen::Index>(latent));
    for (std::size_t i = 0; i < n; ++i) {
      for (Eigen::Index k = 0; k < s.size(); ++k) s(k) = normal(rng);
      for (std::size_t m = 0; m < modalities; ++m) {
        const auto& spec = config.modalities[m];
        Vector eps(static_cast<Eigen::Index>(spec.dim));
        for (Eigen::Index k = 0; k < eps.size(); ++k) eps(k) = normal(rng);
        const Vector shared = projections[m] * s;
        b.inputs[m].row(static_cast<Eigen::Index>(i)) =
            (spec.signal * means[m].row(static_cast<Eigen::Index>(b.labels[i])).transpose() +
             spec.noise * (own * eps + config.coupling * shared))
                .transpose();
      }
    }
    return b;
  };
  out.train = draw_split(config.train_size, root.split(3));
  out.test = draw_split(config.test_size, root.split(4));
  return out;
}

Batch batch_from_outcomes(std::span<const Outcome> outcomes, const std::vector<std::size_t>& alphabet_sizes) {
  const std::size_t modalities = alphabet_sizes.size() - 1;
  Batch b;
  for (std::size_t m = 0; m < modalities; ++m) {
    std::vector<std::size_t> symbols;
    symbols.reserve(outcomes.size());
    for (const auto& o : outcomes) symbols.push_back(o.at(m));
    b.inputs.push_back(one_hot_rows(symbols, alphabet_sizes[m]));
  }
  for (const auto& o : outcomes) b.labels.push_back(o.at(modalities));
  return b;
}

JointDistribution empirical_distribution(std::span<const Outcome> outcomes, std::vector<std::size_t> alphabet_sizes) {
  if (outcomes.empty()) throw InvalidArgument("no outcomes to tabulate");
  std::size_t cells = 1;
  for (std::size_t s : alphabet_sizes) cells *= s;
  std::vector<double> counts(cells, 0.0);
  for (const auto& o : outcomes) {
    if (o.size() != alphabet_sizes.size()) throw InvalidArgument("outcome arity does not match the alphabet");
    std::size_t index = 0;
    for (std::size_t v = 0; v < o.size(); ++v) {
      if (o[v] >= alphabet_sizes[v]) throw InvalidArgument("outcome coordinate out of range");
      index = index * alphabet_sizes[v] + o[v];
    }
    counts[index] += 1.0;
  }
  for (double& c : counts) c /= static_cast<double>(outcomes.size());
  return JointDistribution(std::move(alphabet_sizes), std::move(counts));
}

JointDistribution empirical_distribution(const LabeledDataset& dataset) {
  if (!dataset.discrete()) throw InvalidArgument("empirical distribution needs a discrete dataset");
  return empirical_distribution(dataset.train_outcomes, dataset.ground_truth->alphabet_sizes());
}

LabeledDataset exact_frequency_dataset(const JointDistribution& table, std::size_t total) {
  LabeledDataset out;
  out.config.kind = GeneratorKind::discrete_table;
  out.config.table = table;
  out.config.num_classes = table.alphabet_sizes().back();
  out.config.train_size = out.config.test_size = total;
  out.train_outcomes = exact_frequency_outcomes(table, total);
  out.test_outcomes = out.train_outcomes;
  out.train = batch_from_outcomes(out.train_outcomes, table.alphabet_sizes());
  out.test = out.train;
  out.ground_truth = table;
  return out;
}

std::string dataset_to_json(const LabeledDataset& dataset) {
  const auto& c = dataset.config;
  nlohmann::json doc;
  nlohmann::json cfg;
  cfg["kind"] = to_string(c.kind);
  cfg["num_classes"] = c.num_classes;
  cfg["coupling"] = c.coupling;
  cfg["train_size"] = c.train_size;
  cfg["test_size"] = c.test_size;
  cfg["modalities"] = nlohmann::json::array();
  for (const auto& m : c.modalities) cfg["modalities"].push_back({{"dim", m.dim}, {"signal", m.signal}, {"noise", m.noise}});
  if (c.table) cfg["table"] = nlohmann::json::parse(distribution_to_json(*c.table));
  doc["config"] = std::move(cfg);
  doc["seed"] = c.seed;
  doc["train"] = batch_to_json(dataset.train);
  doc["test"] = batch_to_json(dataset.test);
  if (dataset.discrete()) {
    doc["train_outcomes"] = dataset.train_outcomes;
    doc["test_outcomes"] = dataset.test_outcomes;
  }
  return doc.dump();
}

LabeledDataset dataset_from_json(const std::string& text) {
  try {
    const auto doc = nlohmann::json::parse(text);
    LabeledDataset out;
    const auto& cfg = doc.at("config");
    out.config.kind = generator_kind_from_string(cfg.at("kind").get<std::string>());
    out.config.num_classes = cfg.at("num_classes").get<std::size_t>();
    out.config.coupling = cfg.at("coupling").get<double>();
    out.config.train_size = cfg.at("train_size").get<std::size_t>();
    out.config.test_size = cfg.at("test_size").get<std::size_t>();
    for (const auto& m : cfg.at("modalities"))
      out.config.modalities.push_back({m.at("dim").get<std::size_t>(), m.at("signal").get<double>(), m.at("noise").get<double>()});
    if (cfg.contains("table")) out.config.table = distribution_from_json(cfg.at("table").dump());
    out.config.seed = doc.at("seed").get<std::uint64_t>();
    out.train = batch_from_json(doc.at("train"));
    out.test = batch_from_json(doc.at("test"));
    if (out.config.table) {
      out.ground_truth = out.config.table;
      out.train_outcomes = doc.at("train_outcomes").get<std::vector<Outcome>>();
      out.test_outcomes = doc.at("test_outcomes").get<std::vector<Outcome>>();
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed dataset file: ") + e.what());
  }
}

}  // namespace tcmax
