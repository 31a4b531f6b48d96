#include "uhgr/evaluator.hpp"

#include <cmath>
#include <cstring>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "uhgr/checkpoint.hpp"
#include "uhgr/random.hpp"

namespace uhgr {

using ad::Tape;
using json = nlohmann::json;

Eigen::Index EmbeddingSet::dim() const {
  return node_embeddings.size() ? node_embeddings.cols() : graph_summaries.cols();
}

// ---- extraction -----------------------------------------------------------

namespace {

const ForwardOptions kEval{ad::Mode::kEval, false};

void require_finite_embeddings(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw NumericError(std::string(what) + " contain non-finite values");
}

}  // namespace

EmbeddingSet extract_node_embeddings(const UhgrModel& model, const Graph& graph) {
  const GraphTensors t = GraphTensors::from(graph);
  Tape tape;
  UhgrModel::Forward fw = model.forward(tape, t, kEval);
  EmbeddingSet out;
  out.node_embeddings = fw.nodes.value();
  out.graph_summaries = fw.summary.value();
  out.config_hash = model.config().hash();
  out.encoder = model.config().encoder_type;
  require_finite_embeddings(out.node_embeddings, "node embeddings");
  return out;
}

EmbeddingSet extract_graph_summaries(const UhgrModel& model, const std::vector<const Graph*>& graphs) {
  EmbeddingSet out;
  out.config_hash = model.config().hash();
  out.encoder = model.config().encoder_type;
  out.graph_summaries.resize(static_cast<Eigen::Index>(graphs.size()), model.config().embed_dim);
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    const GraphTensors t = GraphTensors::from(*graphs[i]);
    Tape tape;
    UhgrModel::Forward fw = model.forward(tape, t, kEval);
    out.graph_summaries.row(static_cast<Eigen::Index>(i)) = fw.summary.value();
  }
  require_finite_embeddings(out.graph_summaries, "graph summaries");
  return out;
}

EmbeddingSet extract_graph_summaries(const UhgrModel& model, const GraphDataset& dataset) {
  std::vector<const Graph*> graphs;
  for (const Graph& g : dataset.graphs) graphs.push_back(&g);
  EmbeddingSet out = extract_graph_summaries(model, graphs);
  out.dataset = dataset.name;
  return out;
}

// ---- embedding files ------------------------------------------------------

std::string serialize_embeddings(const EmbeddingSet& set) {
  json header{{"format", "uhgr-embeddings"},
              {"version", 1},
              {"node_rows", set.node_embeddings.rows()},
              {"node_cols", set.node_embeddings.cols()},
              {"summary_rows", set.graph_summaries.rows()},
              {"summary_cols", set.graph_summaries.cols()},
              {"config_hash", hex64(set.config_hash)},
              {"dataset", set.dataset},
              {"encoder", set.encoder}};
  std::string out = header.dump();
  out += '\n';
  auto append = [&out](const Matrix& m) {
    out.append(reinterpret_cast<const char*>(m.data()), static_cast<std::size_t>(m.size()) * sizeof(double));
  };
  append(set.node_embeddings);
  append(set.graph_summaries);
  return out;
}

EmbeddingSet deserialize_embeddings(const std::string& bytes) {
  const auto nl = bytes.find('\n');
  if (nl == std::string::npos) throw FormatError("embedding file: missing header line");
  EmbeddingSet set;
  Eigen::Index nr = 0, nc = 0, sr = 0, sc = 0;
  try {
    const json header = json::parse(bytes.substr(0, nl));
    if (header.at("format").get<std::string>() != "uhgr-embeddings" || header.at("version").get<int>() != 1) {
      throw FormatError("embedding file: unsupported format");
    }
    nr = header.at("node_rows").get<Eigen::Index>();
    nc = header.at("node_cols").get<Eigen::Index>();
    sr = header.at("summary_rows").get<Eigen::Index>();
    sc = header.at("summary_cols").get<Eigen::Index>();
    set.config_hash = std::stoull(header.at("config_hash").get<std::string>(), nullptr, 16);
    set.dataset = header.at("dataset").get<std::string>();
    set.encoder = header.value("encoder", "");
  } catch (const json::exception& e) {
    throw FormatError(std::string("embedding file header: ") + e.what());
  } catch (const std::logic_error& e) {
    throw FormatError(std::string("embedding file header: ") + e.what());
  }
  if (nr < 0 || nc < 0 || sr < 0 || sc < 0) throw FormatError("embedding file: negative dimensions");
  const std::size_t expect = static_cast<std::size_t>(nr * nc + sr * sc) * sizeof(double);
  if (bytes.size() - nl - 1 != expect) {
    throw IntegrityError("embedding file: payload has " + std::to_string(bytes.size() - nl - 1) +
                         " bytes, header implies " + std::to_string(expect));
  }
  const char* p = bytes.data() + nl + 1;
  set.node_embeddings.resize(nr, nc);
  std::memcpy(set.node_embeddings.data(), p, static_cast<std::size_t>(nr * nc) * sizeof(double));
  p += static_cast<std::size_t>(nr * nc) * sizeof(double);
  set.graph_summaries.resize(sr, sc);
  std::memcpy(set.graph_summaries.data(), p, static_cast<std::size_t>(sr * sc) * sizeof(double));
  return set;
}

void save_embeddings(const EmbeddingSet& set, const std::string& path) {
  write_file_atomic(path, serialize_embeddings(set));
}

EmbeddingSet load_embeddings(const std::string& path) { return deserialize_embeddings(read_file(path)); }

// ---- probe ----------------------------------------------------------------

namespace {

void softmax_rows(Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    auto row = m.row(i);
    row.array() -= row.maxCoeff();
    row = row.array().exp().matrix();
    row /= row.sum();
  }
}

// Largest eigenvalue of [X 1]ᵀ[X 1] by power iteration.
double gram_spectral_norm(const Matrix& x, Rng& rng) {
  const Eigen::Index f = x.cols();
  Eigen::VectorXd v(f + 1);
  for (Eigen::Index i = 0; i <= f; ++i) v(i) = rng.uniform(0.5, 1.5);
  v.normalize();
  double lambda = 0.0;
  for (int it = 0; it < 200; ++it) {
    Eigen::VectorXd xv = x * v.head(f);
    xv.array() += v(f);
    Eigen::VectorXd w(f + 1);
    w.head(f) = x.transpose() * xv;
    w(f) = xv.sum();
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;
    const double next = norm;
    v = w / norm;
    if (std::abs(next - lambda) <= 1e-10 * next) {
      lambda = next;
      break;
    }
    lambda = next;
  }
  return lambda;
}

}  // namespace

LinearProbe LinearProbe::fit(const Matrix& x, const std::vector<int>& labels,
                             const std::vector<std::size_t>& train, int num_classes,
                             std::uint64_t seed, const ProbeOptions& options) {
  if (static_cast<Eigen::Index>(labels.size()) != x.rows()) {
    throw ShapeError("probe: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(x.rows()) + " embedding rows");
  }
  if (train.empty()) throw ConfigError("probe: empty training set");
  if (num_classes < 2) throw ConfigError("probe: need at least two classes");
  std::set<int> seen;
  const auto n = static_cast<Eigen::Index>(train.size());
  Matrix xt(n, x.cols());
  Matrix y = Matrix::Zero(n, num_classes);
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::size_t idx = train[static_cast<std::size_t>(i)];
    if (idx >= labels.size()) throw ShapeError("probe: training index out of range");
    const int c = labels[idx];
    if (c < 0 || c >= num_classes) throw FormatError("probe: label out of range");
    seen.insert(c);
    xt.row(i) = x.row(static_cast<Eigen::Index>(idx));
    y(i, c) = 1.0;
  }
  if (seen.size() < 2) throw ConfigError("probe: training set contains a single class");
  if (!xt.allFinite()) throw NumericError("probe: non-finite embeddings");

  Rng rng(seed);
  LinearProbe probe;
  probe.weight = glorot_uniform(x.cols(), num_classes, rng);
  probe.bias = Matrix::Zero(1, num_classes);
  const double inv_n = 1.0 / static_cast<double>(n);
  const double smooth = 0.5 * gram_spectral_norm(xt, rng) * inv_n + options.l2;
  const double step = 1.0 / smooth;

  for (probe.iterations = 0; probe.iterations < options.max_iterations; ++probe.iterations) {
    Matrix p = xt * probe.weight;
    p.rowwise() += probe.bias.row(0);
    softmax_rows(p);
    p -= y;
    Matrix gw = xt.transpose() * p * inv_n + options.l2 * probe.weight;
    Matrix gb = p.colwise().sum() * inv_n;
    probe.final_grad_norm = std::sqrt(gw.squaredNorm() + gb.squaredNorm());
    if (probe.final_grad_norm < options.grad_tol) break;
    probe.weight -= step * gw;
    probe.bias -= step * gb;
  }
  return probe;
}

Matrix LinearProbe::logits(const Matrix& x) const {
  if (x.cols() != weight.rows()) {
    throw ShapeError("probe: embeddings have " + std::to_string(x.cols()) + " columns, probe expects " +
                     std::to_string(weight.rows()));
  }
  Matrix out = x * weight;
  out.rowwise() += bias.row(0);
  return out;
}

std::vector<int> LinearProbe::predict(const Matrix& x) const {
  const Matrix z = logits(x);
  std::vector<int> out(static_cast<std::size_t>(z.rows()));
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    Eigen::Index best = 0;
    z.row(i).maxCoeff(&best);
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

double LinearProbe::accuracy(const Matrix& x, const std::vector<int>& labels,
                             const std::vector<std::size_t>& indices) const {
  if (indices.empty()) throw ConfigError("probe: empty evaluation set");
  const std::vector<int> pred = predict(x);
  std::size_t hits = 0;
  for (std::size_t i : indices) {
    if (i >= pred.size() || i >= labels.size()) throw ShapeError("probe: evaluation index out of range");
    hits += pred[i] == labels[i];
  }
  return static_cast<double>(hits) / static_cast<double>(indices.size());
}

// ---- reports --------------------------------------------------------------

EvalReport EvalReport::summarize(std::string task, std::string dataset, std::string encoder,
                                 std::vector<double> per_run, std::uint64_t config_hash) {
  if (per_run.empty()) throw ConfigError("report: no runs");
  EvalReport r;
  r.task = std::move(task);
  r.dataset = std::move(dataset);
  r.encoder = std::move(encoder);
  r.runs = static_cast<int>(per_run.size());
  double sum = 0.0;
  for (double a : per_run) sum += a;
  r.mean = sum / static_cast<double>(per_run.size());
  double var = 0.0;
  for (double a : per_run) var += (a - r.mean) * (a - r.mean);
  r.std = std::sqrt(var / static_cast<double>(per_run.size()));
  r.per_run = std::move(per_run);
  r.config_hash = config_hash;
  return r;
}

json EvalReport::to_json() const {
  return json{{"task", task},       {"dataset", dataset}, {"encoder", encoder},
              {"mean", mean},       {"std", std},         {"runs", runs},
              {"per_run", per_run}, {"config_hash", hex64(config_hash)}};
}

EvalReport EvalReport::from_json(const json& j) {
  try {
    EvalReport r;
    r.task = j.at("task").get<std::string>();
    r.dataset = j.at("dataset").get<std::string>();
    r.encoder = j.at("encoder").get<std::string>();
    r.mean = j.at("mean").get<double>();
    r.std = j.at("std").get<double>();
    r.runs = j.at("runs").get<int>();
    r.per_run = j.at("per_run").get<std::vector<double>>();
    r.config_hash = std::stoull(j.at("config_hash").get<std::string>(), nullptr, 16);
    return r;
  } catch (const json::exception& e) {
    throw FormatError(std::string("report json: ") + e.what());
  }
}

std::string EvalReport::csv_row() const {
  std::ostringstream out;
  out.precision(6);
  out << std::fixed << task << ',' << dataset << ',' << encoder << ',' << mean << ',' << std << ','
      << runs;
  return out.str();
}

// ---- benchmarks -----------------------------------------------------------

namespace {

int class_count(const std::vector<int>& labels) {
  int c = 0;
  for (int l : labels) c = std::max(c, l + 1);
  return c;
}

}  // namespace

EvalReport node_benchmark(const Matrix& embeddings, const Graph& graph, const SplitSpec& split,
                          int runs, std::uint64_t seed, const ProbeOptions& probe) {
  if (runs < 1) throw ConfigError("node benchmark: runs must be >= 1");
  if (graph.node_labels.empty()) throw ConfigError("node benchmark: graph has no node labels");
  const int classes = class_count(graph.node_labels);
  std::vector<double> acc;
  for (int r = 0; r < runs; ++r) {
    const LinearProbe p =
        LinearProbe::fit(embeddings, graph.node_labels, split.train, classes, seed + static_cast<std::uint64_t>(r), probe);
    acc.push_back(p.accuracy(embeddings, graph.node_labels, split.test));
  }
  return EvalReport::summarize("node", "", "", std::move(acc), 0);
}

EvalReport node_benchmark(const UhgrModel& model, const Graph& graph, const SplitSpec& split, int runs,
                          std::uint64_t seed, const ProbeOptions& probe) {
  const EmbeddingSet e = extract_node_embeddings(model, graph);
  EvalReport r = node_benchmark(e.node_embeddings, graph, split, runs, seed, probe);
  r.encoder = model.config().encoder_type;
  r.config_hash = model.config().hash();
  return r;
}

EvalReport node_benchmark_retrain(const ModelConfig& config, const Graph& graph, const SplitSpec& split,
                                  int runs, const ProbeOptions& probe, const TrainOptions& train) {
  if (runs < 1) throw ConfigError("node benchmark: runs must be >= 1");
  if (graph.node_labels.empty()) throw ConfigError("node benchmark: graph has no node labels");
  const int classes = class_count(graph.node_labels);
  std::vector<double> acc;
  for (int r = 0; r < runs; ++r) {
    ModelConfig c = config;
    c.seed = config.seed + static_cast<std::uint64_t>(r);
    TrainResult trained = train_unsupervised(c, graph, train);
    const EmbeddingSet e = extract_node_embeddings(*trained.state.model, graph);
    const LinearProbe p = LinearProbe::fit(e.node_embeddings, graph.node_labels, split.train, classes, c.seed, probe);
    acc.push_back(p.accuracy(e.node_embeddings, graph.node_labels, split.test));
  }
  return EvalReport::summarize("node", "", config.encoder_type, std::move(acc), config.hash());
}

EvalReport graph_benchmark(const ModelConfig& config, const GraphDataset& dataset,
                           const GraphBenchmarkOptions& options) {
  const std::vector<SplitSpec> folds = build_folds(dataset, options.folds, options.seed);
  const std::vector<int> labels = dataset.labels();
  const int classes = std::max(dataset.num_classes, class_count(labels));
  std::vector<double> acc;
  for (const SplitSpec& fold : folds) {
    std::vector<const Graph*> train_graphs;
    for (std::size_t i : fold.train) train_graphs.push_back(&dataset.graphs[i]);
    TrainResult trained = train_unsupervised(config, train_graphs, options.train);
    const EmbeddingSet e = extract_graph_summaries(*trained.state.model, dataset);
    const LinearProbe p = LinearProbe::fit(e.graph_summaries, labels, fold.train, classes,
                                           options.seed + static_cast<std::uint64_t>(*fold.fold_id), options.probe);
    acc.push_back(p.accuracy(e.graph_summaries, labels, fold.test));
    if (options.on_fold) options.on_fold(*fold.fold_id, acc.back());
  }
  EvalReport r = EvalReport::summarize("graph", dataset.name, config.encoder_type, std::move(acc), config.hash());
  return r;
}

EvalReport graph_benchmark_frozen(const Matrix& summaries, const GraphDataset& dataset,
                                  const GraphBenchmarkOptions& options) {
  if (summaries.rows() != static_cast<Eigen::Index>(dataset.size())) {
    throw ShapeError("graph benchmark: " + std::to_string(summaries.rows()) + " summaries for " +
                     std::to_string(dataset.size()) + " graphs");
  }
  const std::vector<SplitSpec> folds = build_folds(dataset, options.folds, options.seed);
  const std::vector<int> labels = dataset.labels();
  const int classes = std::max(dataset.num_classes, class_count(labels));
  std::vector<double> acc;
  for (const SplitSpec& fold : folds) {
    const LinearProbe p = LinearProbe::fit(summaries, labels, fold.train, classes,
                                           options.seed + static_cast<std::uint64_t>(*fold.fold_id), options.probe);
    acc.push_back(p.accuracy(summaries, labels, fold.test));
    if (options.on_fold) options.on_fold(*fold.fold_id, acc.back());
  }
  return EvalReport::summarize("graph", dataset.name, "", std::move(acc), 0);
}

}  // namespace uhgr
