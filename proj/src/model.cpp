#include "uhgr/model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "uhgr/random.hpp"

namespace uhgr {

using ad::Tape;
using ad::Var;
using json = nlohmann::json;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* first = value.data();
  const char* last = value.data() + value.size();
  auto res = std::from_chars(first, last, out);
  if (res.ec != std::errc() || res.ptr != last) {
    throw ConfigError("config: bad value for " + key + ": '" + value + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  throw ConfigError("config: bad boolean for " + key + ": '" + value + "'");
}

std::vector<double> parse_ratios(const std::string& value) {
  std::vector<double> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<double>("pool_ratios", trim(item)));
  return out;
}

}  // namespace

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t state) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    state ^= p[i];
    state *= 0x100000001b3ULL;
  }
  return state;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// ---- config ---------------------------------------------------------------

void ModelConfig::validate() const {
  if (encoder_type != "gcn" && encoder_type != "gat") {
    throw ConfigError("config: encoder must be gcn or gat, got '" + encoder_type + "'");
  }
  if (heads < 1) throw ConfigError("config: heads must be >= 1");
  if (hidden_dim < 1 || embed_dim < 1) throw ConfigError("config: dimensions must be >= 1");
  if (encoder_layers < 1) throw ConfigError("config: encoder_layers must be >= 1");
  if (encoder_type == "gat" && encoder_layers > 1 && hidden_dim % heads != 0) {
    throw ConfigError("config: hidden_dim must be divisible by heads for concatenated GAT layers");
  }
  if (pool_ratios.empty()) throw ConfigError("config: pool_ratios must not be empty");
  for (double r : pool_ratios) {
    if (!(r > 0.0 && r <= 1.0)) throw ConfigError("config: pool ratio " + format_double(r) + " not in (0,1]");
  }
  if (interlevel_gcn_layers < 1) throw ConfigError("config: interlevel_gcn_layers must be >= 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("config: lr must be positive");
  if (weight_decay < 0.0) throw ConfigError("config: weight_decay must be >= 0");
  if (max_epochs < 1) throw ConfigError("config: max_epochs must be >= 1");
  if (patience < 0) throw ConfigError("config: patience must be >= 0");
  if (max_clusters < 1) throw ConfigError("config: max_clusters must be >= 1");
  if (min_delta < 0.0) throw ConfigError("config: min_delta must be >= 0");
}

json ModelConfig::to_json() const {
  return json{{"encoder", encoder_type},
              {"heads", heads},
              {"hidden_dim", hidden_dim},
              {"embed_dim", embed_dim},
              {"encoder_layers", encoder_layers},
              {"pool_ratios", pool_ratios},
              {"interlevel_gcn_layers", interlevel_gcn_layers},
              {"lr", lr},
              {"weight_decay", weight_decay},
              {"max_epochs", max_epochs},
              {"patience", patience},
              {"seed", seed},
              {"aux_losses", aux_losses},
              {"max_clusters", max_clusters},
              {"min_delta", min_delta},
              {"debug_gradcheck", debug_gradcheck},
              {"batch_norm", batch_norm}};
}

ModelConfig ModelConfig::from_json(const json& j) {
  ModelConfig c;
  try {
    c.encoder_type = j.at("encoder").get<std::string>();
    c.heads = j.at("heads").get<int>();
    c.hidden_dim = j.at("hidden_dim").get<Eigen::Index>();
    c.embed_dim = j.at("embed_dim").get<Eigen::Index>();
    c.encoder_layers = j.at("encoder_layers").get<int>();
    c.pool_ratios = j.at("pool_ratios").get<std::vector<double>>();
    c.interlevel_gcn_layers = j.at("interlevel_gcn_layers").get<int>();
    c.lr = j.at("lr").get<double>();
    c.weight_decay = j.at("weight_decay").get<double>();
    c.max_epochs = j.at("max_epochs").get<int>();
    c.patience = j.at("patience").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.aux_losses = j.at("aux_losses").get<bool>();
    c.max_clusters = j.at("max_clusters").get<Eigen::Index>();
    c.min_delta = j.at("min_delta").get<double>();
    c.debug_gradcheck = j.at("debug_gradcheck").get<bool>();
    c.batch_norm = j.value("batch_norm", true);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config json: ") + e.what());
  }
  c.validate();
  return c;
}

void ModelConfig::set(const std::string& key, const std::string& raw) {
  const std::string value = trim(raw);
  if (key == "encoder" || key == "encoder_type") {
    encoder_type = value;
  } else if (key == "heads") {
    heads = parse_number<int>(key, value);
  } else if (key == "hidden_dim" || key == "hidden") {
    hidden_dim = parse_number<Eigen::Index>(key, value);
  } else if (key == "embed_dim" || key == "embed") {
    embed_dim = parse_number<Eigen::Index>(key, value);
  } else if (key == "encoder_layers") {
    encoder_layers = parse_number<int>(key, value);
  } else if (key == "pool_ratios" || key == "ratios") {
    pool_ratios = parse_ratios(value);
  } else if (key == "interlevel_gcn_layers") {
    interlevel_gcn_layers = parse_number<int>(key, value);
  } else if (key == "lr") {
    lr = parse_number<double>(key, value);
  } else if (key == "weight_decay") {
    weight_decay = parse_number<double>(key, value);
  } else if (key == "max_epochs" || key == "epochs") {
    max_epochs = parse_number<int>(key, value);
  } else if (key == "patience") {
    patience = parse_number<int>(key, value);
  } else if (key == "seed") {
    seed = parse_number<std::uint64_t>(key, value);
  } else if (key == "aux_losses") {
    aux_losses = parse_bool(key, value);
  } else if (key == "max_clusters") {
    max_clusters = parse_number<Eigen::Index>(key, value);
  } else if (key == "min_delta") {
    min_delta = parse_number<double>(key, value);
  } else if (key == "debug_gradcheck") {
    debug_gradcheck = parse_bool(key, value);
  } else if (key == "batch_norm") {
    batch_norm = parse_bool(key, value);
  } else {
    throw ConfigError("config: unknown key '" + key + "'");
  }
}

std::string ModelConfig::to_text() const {
  std::ostringstream out;
  std::string ratios;
  for (std::size_t i = 0; i < pool_ratios.size(); ++i) {
    if (i) ratios += ",";
    ratios += format_double(pool_ratios[i]);
  }
  out << "encoder = " << encoder_type << "\n"
      << "heads = " << heads << "\n"
      << "hidden_dim = " << hidden_dim << "\n"
      << "embed_dim = " << embed_dim << "\n"
      << "encoder_layers = " << encoder_layers << "\n"
      << "pool_ratios = " << ratios << "\n"
      << "interlevel_gcn_layers = " << interlevel_gcn_layers << "\n"
      << "lr = " << format_double(lr) << "\n"
      << "weight_decay = " << format_double(weight_decay) << "\n"
      << "max_epochs = " << max_epochs << "\n"
      << "patience = " << patience << "\n"
      << "seed = " << seed << "\n"
      << "aux_losses = " << (aux_losses ? "true" : "false") << "\n"
      << "max_clusters = " << max_clusters << "\n"
      << "min_delta = " << format_double(min_delta) << "\n"
      << "debug_gradcheck = " << (debug_gradcheck ? "true" : "false") << "\n"
      << "batch_norm = " << (batch_norm ? "true" : "false") << "\n";
  return out.str();
}

ModelConfig ModelConfig::parse(const std::string& text, const ModelConfig& base) {
  ModelConfig c = base;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    c.set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  c.validate();
  return c;
}

ModelConfig ModelConfig::load(const std::string& path, const ModelConfig& base) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), base);
}

ModelConfig ModelConfig::parse(const std::string& text) { return parse(text, ModelConfig{}); }
ModelConfig ModelConfig::load(const std::string& path) { return load(path, ModelConfig{}); }

std::uint64_t ModelConfig::hash() const {
  const std::string canonical = to_json().dump();
  return fnv1a(canonical.data(), canonical.size());
}

// ---- graph tensors --------------------------------------------------------

GraphTensors GraphTensors::from(const Graph& graph) {
  if (graph.features.rows() != graph.adjacency.rows()) {
    throw ShapeError("graph tensors: feature rows do not match node count");
  }
  if (graph.features.cols() == 0) throw ShapeError("graph tensors: graph has no feature columns");
  GraphTensors t;
  t.adjacency = std::make_shared<const SparseMatrix>(graph.adjacency);
  t.propagation = Propagation::from_adjacency(graph.adjacency);
  const double nnz = static_cast<double>((graph.features.array() != 0.0).count());
  if (nnz < 0.25 * static_cast<double>(graph.features.size())) {
    SparseMatrix s = graph.features.sparseView();
    s.makeCompressed();
    t.sparse_features = std::make_shared<const SparseMatrix>(std::move(s));
  } else {
    t.dense_features = std::make_shared<const Matrix>(graph.features);
  }
  return t;
}

Eigen::Index GraphTensors::feature_dim() const {
  return sparse_features ? sparse_features->cols() : dense_features->cols();
}

NodeInput GraphTensors::input(Tape& tape) const {
  if (sparse_features) return NodeInput::of(sparse_features);
  return NodeInput::of(tape.constant(*dense_features));
}

GraphTensors GraphTensors::with_permuted_features(const std::vector<std::size_t>& perm) const {
  if (static_cast<Eigen::Index>(perm.size()) != num_nodes()) {
    throw ShapeError("permuted features: permutation length mismatch");
  }
  GraphTensors t = *this;
  if (sparse_features) {
    const SparseMatrix& x = *sparse_features;
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(x.nonZeros()));
    for (std::size_t i = 0; i < perm.size(); ++i) {
      for (SparseMatrix::InnerIterator it(x, static_cast<Eigen::Index>(perm[i])); it; ++it) {
        trips.emplace_back(static_cast<Eigen::Index>(i), it.col(), it.value());
      }
    }
    SparseMatrix out(x.rows(), x.cols());
    out.setFromTriplets(trips.begin(), trips.end());
    t.sparse_features = std::make_shared<const SparseMatrix>(std::move(out));
  } else {
    const Matrix& x = *dense_features;
    Matrix out(x.rows(), x.cols());
    for (std::size_t i = 0; i < perm.size(); ++i) {
      out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(perm[i]));
    }
    t.dense_features = std::make_shared<const Matrix>(std::move(out));
  }
  return t;
}

// ---- model ----------------------------------------------------------------

UhgrModel::UhgrModel(const ModelConfig& config, Eigen::Index input_dim, Eigen::Index max_nodes)
    : config_(config), input_dim_(input_dim), max_nodes_(max_nodes) {
  config_.validate();
  if (input_dim < 1) throw ShapeError("model: input dimension must be positive");
  if (max_nodes < 1) throw ShapeError("model: max_nodes must be positive");
  Rng rng(config_.seed);

  const int layers = config_.encoder_layers;
  Eigen::Index din = input_dim;
  for (int i = 0; i < layers; ++i) {
    const bool last = i + 1 == layers;
    const Eigen::Index dout = last ? config_.embed_dim : config_.hidden_dim;
    const std::string prefix = "encoder.layer" + std::to_string(i);
    // The last encoder layer yields the discriminator's local features. Batch
    // norm there zero-centres positives and negatives alike, which leaves a
    // bilinear scorer nothing to separate, so it is skipped.
    const bool bn = config_.batch_norm && !last;
    if (config_.encoder_type == "gcn") {
      encoder_.push(std::make_unique<GcnLayer>(store_, prefix, din, dout, rng, true, bn));
    } else if (last) {
      encoder_.push(std::make_unique<GatLayer>(store_, prefix, din, dout, config_.heads, false, rng, bn));
    } else {
      encoder_.push(std::make_unique<GatLayer>(store_, prefix, din, dout / config_.heads,
                                               config_.heads, true, rng, bn));
    }
    din = dout;
  }

  const Eigen::Index f = config_.embed_dim;
  Eigen::Index level_max = max_nodes;
  const std::size_t nblocks = config_.pool_ratios.size();
  for (std::size_t b = 0; b < nblocks; ++b) {
    DiffPoolBlock block;
    block.final_block = b + 1 == nblocks;
    block.ratio = config_.pool_ratios[b];
    const std::string prefix = "pool" + std::to_string(b);
    if (b > 0) {
      for (int l = 0; l < config_.interlevel_gcn_layers; ++l) {
        // Batch norm directly before the final sum-collapse would make the
        // summary constant, so the last layer of the last block skips it.
        const bool bn = config_.batch_norm && !(block.final_block && l + 1 == config_.interlevel_gcn_layers);
        block.embed_gnn.push(std::make_unique<GcnLayer>(
            store_, prefix + ".embed.layer" + std::to_string(l), f, f, rng, true, bn));
      }
    }
    if (block.final_block) {
      block.max_clusters = 1;
    } else {
      const auto want = static_cast<Eigen::Index>(
          std::ceil(block.ratio * static_cast<double>(level_max) - 1e-12));
      block.max_clusters = std::clamp<Eigen::Index>(want, 1, config_.max_clusters);
    }
    block.assign_gnn.push(std::make_unique<GcnLayer>(store_, prefix + ".assign", f,
                                                     block.max_clusters, rng, false, false));
    level_max = block.max_clusters;
    blocks_.push_back(std::move(block));
  }

  discriminator_ = Discriminator::create(store_, "discriminator.weight", f, rng);
}

void UhgrModel::check_input(const GraphTensors& g) const {
  if (g.feature_dim() != input_dim_) {
    throw ShapeError("model expects " + std::to_string(input_dim_) + " input features, data has " +
                     std::to_string(g.feature_dim()));
  }
}

Var UhgrModel::encode(Tape& tape, const GraphTensors& g, const ForwardOptions& opts) const {
  check_input(g);
  return encoder_.encode(tape, g.propagation, g.input(tape), opts);
}

UhgrModel::Forward UhgrModel::forward(Tape& tape, const GraphTensors& g, const ForwardOptions& opts,
                                      bool aux_losses) const {
  Forward out;
  out.nodes = encode(tape, g, opts);
  HierarchyOptions ho;
  ho.forward = opts;
  ho.aux_losses = aux_losses;
  out.hierarchy = hierarchy_forward(tape, blocks_, g.propagation, g.level_adjacency(), out.nodes, ho);
  out.summary = readout(out.hierarchy);
  return out;
}

}  // namespace uhgr
