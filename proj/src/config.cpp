#include "tcmax/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <system_error>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "tcmax/error.hpp"
#include "tcmax/format.hpp"

namespace tcmax {

namespace pt = boost::property_tree;

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string::npos) return {};
  return s.substr(first, s.find_last_not_of(" \t") - first + 1);
}

std::string where(const std::string& section, const std::string& key) {
  return section.empty() ? key : section + "." + key;
}

std::uint64_t parse_uint(const std::string& raw, const std::string& name) {
  const std::string text = trim(raw);
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc{} || ptr != text.data() + text.size())
    throw ConfigError(name + ": expected a non-negative integer, got '" + raw + "'");
  return v;
}

double parse_double(const std::string& raw, const std::string& name) {
  const std::string text = trim(raw);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc{} || ptr != text.data() + text.size())
    throw ConfigError(name + ": expected a number, got '" + raw + "'");
  return v;
}

std::vector<std::size_t> parse_widths(const std::string& raw, const std::string& name) {
  std::vector<std::size_t> out;
  if (trim(raw).empty()) return out;
  std::stringstream ss(raw);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto w = parse_uint(item, name);
    if (w == 0) throw ConfigError(name + ": widths must be positive");
    out.push_back(static_cast<std::size_t>(w));
  }
  return out;
}

std::string join_widths(const std::vector<std::size_t>& widths) {
  std::string out;
  for (std::size_t i = 0; i < widths.size(); ++i) out += (i ? "," : "") + std::to_string(widths[i]);
  return out;
}

// Reads the keys of one section, rejecting anything not listed in `allowed`.
std::map<std::string, std::string> section_keys(const pt::ptree& section, const std::string& name,
                                                const std::set<std::string>& allowed) {
  std::map<std::string, std::string> out;
  for (const auto& [key, node] : section) {
    if (!node.empty()) throw ConfigError("unexpected nested section under '" + name + "'");
    if (!allowed.count(key)) throw ConfigError("unknown key '" + where(name, key) + "'");
    out[key] = node.data();
  }
  return out;
}

template <class T>
T wrap_config(const std::string& what, T (*fn)(const std::string&), const std::string& value) {
  try {
    return fn(value);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(what + ": " + e.what());
  }
}

}  // namespace

ExperimentConfig ExperimentConfig::competition_default() {
  ExperimentConfig c;
  c.data = GeneratorConfig::competition_default();
  c.model.input_dims.clear();
  for (const auto& m : c.data.modalities) c.model.input_dims.push_back(m.dim);
  c.model.encoder_hidden = {32};
  c.model.embed_dim = 16;
  c.model.head = HeadKind::linear_sum;
  c.model.num_classes = c.data.num_classes;
  c.train.strategy = Strategy::joint;
  return c;
}

void ExperimentConfig::validate() const {
  try {
    data.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("data: ") + e.what());
  }
  train.validate();
  if (model.embed_dim == 0) throw ConfigError("model.embed_dim must be positive");
  if (model.head != HeadKind::concat_mlp && !model.head_hidden.empty())
    throw ConfigError("model.head_hidden applies only to the concat_mlp head");
}

ExperimentConfig parse_experiment_config(const std::string& text, const std::filesystem::path& base_dir) {
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("malformed config: ") + e.message() + " (line " + std::to_string(e.line()) + ")");
  }

  ExperimentConfig cfg;
  cfg.data.modalities.clear();
  std::map<std::size_t, ModalitySpec> modalities;
  std::optional<std::string> table_value;

  for (const auto& [name, node] : tree) {
    if (node.empty()) {
      if (name != "seed") throw ConfigError("unknown key '" + name + "'");
      cfg.seed = parse_uint(node.data(), name);
      continue;
    }
    if (name == "data") {
      for (const auto& [key, value] :
           section_keys(node, name, {"generator", "classes", "coupling", "train_size", "test_size", "table"})) {
        const std::string id = where(name, key);
        if (key == "generator")
          cfg.data.kind = wrap_config<GeneratorKind>(id, generator_kind_from_string, trim(value));
        else if (key == "classes")
          cfg.data.num_classes = parse_uint(value, id);
        else if (key == "coupling")
          cfg.data.coupling = parse_double(value, id);
        else if (key == "train_size")
          cfg.data.train_size = parse_uint(value, id);
        else if (key == "test_size")
          cfg.data.test_size = parse_uint(value, id);
        else
          table_value = trim(value);
      }
    } else if (name.rfind("modality", 0) == 0) {
      const auto index = static_cast<std::size_t>(parse_uint(name.substr(8), "section '" + name + "'"));
      ModalitySpec spec;
      for (const auto& [key, value] : section_keys(node, name, {"dim", "signal", "noise"})) {
        const std::string id = where(name, key);
        if (key == "dim")
          spec.dim = parse_uint(value, id);
        else if (key == "signal")
          spec.signal = parse_double(value, id);
        else
          spec.noise = parse_double(value, id);
      }
      modalities[index] = spec;
    } else if (name == "model") {
      for (const auto& [key, value] :
           section_keys(node, name, {"encoder_hidden", "embed_dim", "head", "head_hidden", "activation"})) {
        const std::string id = where(name, key);
        if (key == "encoder_hidden")
          cfg.model.encoder_hidden = parse_widths(value, id);
        else if (key == "embed_dim")
          cfg.model.embed_dim = parse_uint(value, id);
        else if (key == "head")
          cfg.model.head = wrap_config<HeadKind>(id, head_kind_from_string, trim(value));
        else if (key == "head_hidden")
          cfg.model.head_hidden = parse_widths(value, id);
        else
          cfg.model.activation = wrap_config<Activation>(id, activation_from_string, trim(value));
      }
    } else if (name == "train") {
      for (const auto& [key, value] :
           section_keys(node, name, {"strategy", "epochs", "batch_size", "learning_rate", "momentum", "weight_decay",
                                     "negatives", "eval_every"})) {
        const std::string id = where(name, key);
        if (key == "strategy")
          cfg.train.strategy = strategy_from_string(trim(value));
        else if (key == "epochs")
          cfg.train.epochs = parse_uint(value, id);
        else if (key == "batch_size")
          cfg.train.batch_size = parse_uint(value, id);
        else if (key == "learning_rate")
          cfg.train.learning_rate = parse_double(value, id);
        else if (key == "momentum")
          cfg.train.momentum = parse_double(value, id);
        else if (key == "weight_decay")
          cfg.train.weight_decay = parse_double(value, id);
        else if (key == "negatives")
          cfg.train.negatives = parse_uint(value, id);
        else
          cfg.train.eval_every = parse_uint(value, id);
      }
    } else {
      throw ConfigError("unknown section '" + name + "'");
    }
  }

  if (cfg.data.kind == GeneratorKind::discrete_table) {
    if (!table_value || table_value->empty()) throw ConfigError("data.table is required for discrete_table");
    if (!modalities.empty()) throw ConfigError("modality sections do not apply to discrete_table data");
    std::filesystem::path p(*table_value);
    if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
    try {
      cfg.data.table = load_distribution(p.string());
    } catch (const Error& e) {
      throw ConfigError("data.table: " + std::string(e.what()));
    }
    cfg.table_path = std::filesystem::absolute(p).lexically_normal();
    const auto& sizes = cfg.data.table->alphabet_sizes();
    cfg.model.input_dims.assign(sizes.begin(), sizes.end() - 1);
    cfg.data.num_classes = sizes.back();
  } else {
    if (table_value) throw ConfigError("data.table applies only to discrete_table data");
    if (modalities.empty()) throw ConfigError("gaussian_clusters data needs at least one [modalityN] section");
    std::size_t expect = 0;
    for (const auto& [index, spec] : modalities) {
      if (index != expect++) throw ConfigError("modality sections must be numbered 0, 1, ... without gaps");
      cfg.data.modalities.push_back(spec);
      cfg.model.input_dims.push_back(spec.dim);
    }
  }
  cfg.model.num_classes = cfg.data.num_classes;
  cfg.data.seed = cfg.seed;
  cfg.train.seed = cfg.seed;
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_experiment_config(ss.str(), path.parent_path());
}

std::string to_ini(const ExperimentConfig& c) {
  std::ostringstream out;
  out << "seed = " << c.seed << "\n\n[data]\n";
  out << "generator = " << to_string(c.data.kind) << "\n";
  if (c.data.kind == GeneratorKind::discrete_table) {
    out << "table = " << (c.table_path ? c.table_path->string() : std::string()) << "\n";
  } else {
    out << "classes = " << c.data.num_classes << "\n";
    out << "coupling = " << format_number(c.data.coupling) << "\n";
  }
  out << "train_size = " << c.data.train_size << "\n";
  out << "test_size = " << c.data.test_size << "\n";
  if (c.data.kind == GeneratorKind::gaussian_clusters)
    for (std::size_t m = 0; m < c.data.modalities.size(); ++m) {
      const auto& s = c.data.modalities[m];
      out << "\n[modality" << m << "]\n";
      out << "dim = " << s.dim << "\nsignal = " << format_number(s.signal) << "\nnoise = " << format_number(s.noise)
          << "\n";
    }
  out << "\n[model]\n";
  out << "encoder_hidden = " << join_widths(c.model.encoder_hidden) << "\n";
  out << "embed_dim = " << c.model.embed_dim << "\n";
  out << "head = " << to_string(c.model.head) << "\n";
  if (c.model.head == HeadKind::concat_mlp) out << "head_hidden = " << join_widths(c.model.head_hidden) << "\n";
  out << "activation = " << to_string(c.model.activation) << "\n";
  out << "\n[train]\n";
  out << "strategy = " << to_string(c.train.strategy) << "\n";
  out << "epochs = " << c.train.epochs << "\n";
  out << "batch_size = " << c.train.batch_size << "\n";
  out << "learning_rate = " << format_number(c.train.learning_rate) << "\n";
  out << "momentum = " << format_number(c.train.momentum) << "\n";
  out << "weight_decay = " << format_number(c.train.weight_decay) << "\n";
  if (c.train.strategy == Strategy::tcmax_sampled) out << "negatives = " << c.train.negatives << "\n";
  out << "eval_every = " << c.train.eval_every << "\n";
  return out.str();
}

std::string config_reference() {
  return R"(Config file keys (INI; whole-line comments start with ';' or '#'):
  seed                   integer; default run seed (data, init and batch order)
  [data]
    generator            gaussian_clusters | discrete_table
    classes              number of labels (gaussian_clusters)
    coupling             shared-latent weight in [0, 1] (gaussian_clusters)
    train_size           samples in the training split
    test_size            samples in the test split
    table                distribution JSON, label last (discrete_table; relative to the config)
  [modalityN]            one per modality, N = 0, 1, ... (gaussian_clusters)
    dim                  feature dimension
    signal               class-mean scale (unit-norm means)
    noise                noise standard deviation
  [model]
    encoder_hidden       comma-separated hidden widths, empty for a linear encoder
    embed_dim            embedding width per modality
    head                 linear_sum | shared_linear | concat_mlp
    head_hidden          comma-separated hidden widths (concat_mlp)
    activation           relu | tanh
  [train]
    strategy             joint | shared_head | unimodal | tcmax_full | tcmax_sampled | tcmax_factored
    epochs               passes over the training split
    batch_size           samples per step
    learning_rate        SGD step size
    momentum             in [0, 1)
    weight_decay         L2 coefficient added to the gradient
    negatives            negative tuples per batch (tcmax_sampled)
    eval_every           epochs between evaluation records
Unknown keys are errors.
)";
}

SeedRun run_experiment(const ExperimentConfig& config, std::uint64_t seed) {
  ExperimentConfig c = config;
  c.data.seed = seed;
  c.train.seed = seed;
  const LabeledDataset data = generate(c.data);
  MultimodalModel model = MultimodalModel::create(c.model, seed);
  TrainResult result = train(std::move(model), data, c.train);
  return {seed, std::move(result.records)};
}

double median(std::vector<double> values) {
  if (values.empty()) throw InvalidArgument("median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

MetricMedians final_medians(const std::vector<SeedRun>& runs) {
  if (runs.empty()) throw InvalidArgument("no runs to summarise");
  for (const auto& r : runs)
    if (r.records.empty()) throw InvalidArgument("run with seed " + std::to_string(r.seed) + " has no records");
  auto collect = [&](auto&& get) {
    std::vector<double> v;
    for (const auto& r : runs) v.push_back(get(r.records.back()));
    return median(std::move(v));
  };
  MetricMedians out;
  out.multi_accuracy = collect([](const EpochRecord& r) { return r.metrics.multi_accuracy; });
  out.js_divergence = collect([](const EpochRecord& r) { return r.metrics.js_divergence; });
  out.entropy_ratio = collect([](const EpochRecord& r) { return r.metrics.entropy_ratio; });
  const std::size_t modalities = runs.front().records.back().metrics.modality_accuracy.size();
  for (std::size_t m = 0; m < modalities; ++m)
    out.modality_accuracy.push_back(collect([m](const EpochRecord& r) { return r.metrics.modality_accuracy.at(m); }));
  if (runs.front().records.back().tc_lower_bound)
    out.tc_lower_bound = collect([](const EpochRecord& r) { return r.tc_lower_bound.value(); });
  return out;
}

std::vector<SweepPoint> negatives_sweep(const ExperimentConfig& config, const std::vector<std::size_t>& counts,
                                        const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw ConfigError("negatives sweep needs at least one seed");
  std::size_t full = 1;
  for (std::size_t m = 0; m < config.model.input_dims.size(); ++m) full *= config.train.batch_size;

  std::vector<std::size_t> sampled(counts.begin(), counts.end());
  if (std::find(sampled.begin(), sampled.end(), full) == sampled.end()) sampled.push_back(full);

  auto run_point = [&](Strategy strategy, std::size_t negatives) {
    ExperimentConfig c = config;
    c.train.strategy = strategy;
    c.train.negatives = negatives;
    c.validate();
    SweepPoint p;
    p.strategy = to_string(strategy);
    p.negatives = negatives;
    p.full_enumeration = strategy == Strategy::tcmax_full || negatives >= full;
    for (auto seed : seeds) p.multi_accuracy.push_back(run_experiment(c, seed).records.back().metrics.multi_accuracy);
    p.median_multi_accuracy = median(p.multi_accuracy);
    return p;
  };

  std::vector<SweepPoint> out;
  for (std::size_t k : sampled) {
    if (k == 0) throw ConfigError("negative counts must be positive");
    out.push_back(run_point(Strategy::tcmax_sampled, k));
  }
  out.push_back(run_point(Strategy::tcmax_full, 0));
  return out;
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepPoint>& points, const std::vector<std::uint64_t>& seeds) {
  out << "strategy,negatives,full_enumeration";
  for (auto s : seeds) out << ",multi_acc_seed" << s;
  out << ",median_multi_acc\n";
  for (const auto& p : points) {
    out << p.strategy << ',' << p.negatives << ',' << (p.full_enumeration ? 1 : 0);
    for (double a : p.multi_accuracy) out << ',' << format_number(a);
    out << ',' << format_number(p.median_multi_accuracy) << '\n';
  }
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + tmp.string() + "'");
    out << content;
    out.flush();
    if (!out) throw Error("write to '" + tmp.string() + "' failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error("cannot move '" + tmp.string() + "' into place: " + ec.message());
}

}  // namespace tcmax
