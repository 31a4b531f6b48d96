#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "uhgr/graph.hpp"
#include "uhgr/random.hpp"

namespace uhgr {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return in;
}

std::string where(const std::string& path, std::size_t line) {
  return path + ":" + std::to_string(line);
}

// Splits on commas and whitespace.
std::vector<std::string> tokens_of(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',' || std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

long long parse_int(const std::string& tok, const std::string& loc) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw FormatError(loc + ": expected an integer, got '" + tok + "'");
  }
}

double parse_double(const std::string& tok, const std::string& loc) {
  try {
    std::size_t used = 0;
    const double v = std::stod(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw FormatError(loc + ": expected a number, got '" + tok + "'");
  }
}

// Maps arbitrary integer labels onto 0..k-1 in ascending order.
std::map<long long, int> dense_codes(const std::vector<long long>& raw) {
  std::map<long long, int> codes;
  for (long long v : raw) codes.emplace(v, 0);
  int next = 0;
  for (auto& [k, v] : codes) v = next++;
  return codes;
}

}  // namespace

std::vector<std::size_t> Graph::degrees() const {
  std::vector<std::size_t> deg(num_nodes(), 0);
  for (Eigen::Index r = 0; r < adjacency.outerSize(); ++r) {
    for (SparseMatrix::InnerIterator it(adjacency, r); it; ++it) {
      if (it.value() != 0.0) ++deg[static_cast<std::size_t>(r)];
    }
  }
  return deg;
}

void Graph::validate(int num_classes) const {
  const auto n = adjacency.rows();
  if (adjacency.cols() != n) throw FormatError("adjacency is not square");
  if (features.rows() != n) {
    throw FormatError("features have " + std::to_string(features.rows()) + " rows for " +
                      std::to_string(n) + " nodes");
  }
  for (Eigen::Index r = 0; r < adjacency.outerSize(); ++r) {
    for (SparseMatrix::InnerIterator it(adjacency, r); it; ++it) {
      if (it.value() != 1.0) throw FormatError("adjacency entries must be 0 or 1");
      if (it.row() == it.col()) throw FormatError("adjacency has a self loop");
      if (adjacency.coeff(it.col(), it.row()) != it.value()) {
        throw FormatError("adjacency is not symmetric");
      }
    }
  }
  if (!node_labels.empty()) {
    if (static_cast<Eigen::Index>(node_labels.size()) != n) {
      throw FormatError("node label count does not match node count");
    }
    for (int l : node_labels) {
      if (l < 0 || (num_classes >= 0 && l >= num_classes)) {
        throw FormatError("node label out of range: " + std::to_string(l));
      }
    }
  }
}

std::vector<int> GraphDataset::labels() const {
  std::vector<int> out;
  out.reserve(graphs.size());
  for (const Graph& g : graphs) out.push_back(g.graph_label.value_or(-1));
  return out;
}

void GraphDataset::validate() const {
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    const Graph& g = graphs[i];
    g.validate();
    if (g.feature_dim() != feature_dim) {
      throw FormatError("graph " + std::to_string(i) + " has feature width " +
                        std::to_string(g.feature_dim()) + ", expected " + std::to_string(feature_dim));
    }
    if (!g.graph_label || *g.graph_label < 0 || *g.graph_label >= num_classes) {
      throw FormatError("graph " + std::to_string(i) + " has a missing or out-of-range label");
    }
  }
}

SparseMatrix adjacency_from_edges(std::size_t n,
                                  const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (auto [a, b] : edges) {
    if (a >= n || b >= n) throw FormatError("edge endpoint out of range");
    if (a == b) continue;
    seen.emplace(std::min(a, b), std::max(a, b));
  }
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(seen.size() * 2);
  for (auto [a, b] : seen) {
    trips.emplace_back(static_cast<int>(a), static_cast<int>(b), 1.0);
    trips.emplace_back(static_cast<int>(b), static_cast<int>(a), 1.0);
  }
  SparseMatrix adj(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  adj.setFromTriplets(trips.begin(), trips.end());
  adj.makeCompressed();
  return adj;
}

void row_normalize(Matrix& features) {
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    const double s = features.row(i).sum();
    if (s != 0.0) features.row(i) /= s;
  }
}

Graph load_citation_graph(const std::string& content_path, const std::string& cites_path,
                          const CitationLoadOptions& options, CitationLoadInfo* info) {
  std::ifstream content = open_input(content_path);
  std::vector<std::string> ids;
  std::vector<std::vector<double>> rows;
  std::vector<std::string> classes;
  std::unordered_map<std::string, std::size_t> index;
  std::size_t width = 0;
  bool have_width = false;
  std::string line;
  for (std::size_t lineno = 1; std::getline(content, line); ++lineno) {
    std::istringstream ls(line);
    std::vector<std::string> tok;
    for (std::string t; ls >> t;) tok.push_back(std::move(t));
    if (tok.empty()) continue;
    const std::string loc = where(content_path, lineno);
    if (tok.size() < 2) throw FormatError(loc + ": expected '<id> <features...> <class>'");
    const std::size_t w = tok.size() - 2;
    if (!have_width) {
      width = w;
      have_width = true;
    } else if (w != width) {
      throw FormatError(loc + ": feature width " + std::to_string(w) + " differs from " +
                        std::to_string(width));
    }
    if (!index.emplace(tok.front(), ids.size()).second) {
      throw FormatError(loc + ": duplicate node id '" + tok.front() + "'");
    }
    ids.push_back(tok.front());
    std::vector<double> row(w);
    for (std::size_t k = 0; k < w; ++k) row[k] = parse_double(tok[k + 1], loc);
    rows.push_back(std::move(row));
    classes.push_back(tok.back());
  }
  if (ids.empty()) throw FormatError(content_path + ": no nodes");

  const std::size_t n = ids.size();
  Graph g;
  g.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(width));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < width; ++k) {
      g.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
    }
  }
  row_normalize(g.features);

  std::vector<std::string> names(classes.begin(), classes.end());
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());
  g.node_labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    g.node_labels[i] = static_cast<int>(
        std::lower_bound(names.begin(), names.end(), classes[i]) - names.begin());
  }

  CitationLoadInfo local;
  std::ifstream cites = open_input(cites_path);
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (std::size_t lineno = 1; std::getline(cites, line); ++lineno) {
    std::istringstream ls(line);
    std::string a;
    std::string b;
    if (!(ls >> a)) continue;
    const std::string loc = where(cites_path, lineno);
    if (!(ls >> b)) throw FormatError(loc + ": expected '<cited> <citing>'");
    ++local.edge_lines;
    auto ia = index.find(a);
    auto ib = index.find(b);
    if (ia == index.end() || ib == index.end()) {
      if (options.skip_unknown_ids) {
        ++local.unknown_endpoints;
        continue;
      }
      throw FormatError(loc + ": unknown node id '" + (ia == index.end() ? a : b) + "'");
    }
    if (ia->second == ib->second) {
      ++local.self_citations;
      continue;
    }
    edges.emplace_back(ia->second, ib->second);
  }
  g.adjacency = adjacency_from_edges(n, edges);
  local.undirected_edges = g.num_edges();
  local.class_names = names;
  local.node_ids = ids;
  if (info != nullptr) *info = std::move(local);
  g.validate(static_cast<int>(names.size()));
  return g;
}

GraphDataset load_tu_dataset(const std::string& dir, const std::string& name) {
  const fs::path base(dir);
  auto file = [&](const char* suffix) { return (base / (name + suffix)).string(); };
  for (const char* required : {"_A.txt", "_graph_indicator.txt", "_graph_labels.txt"}) {
    if (!fs::exists(file(required))) throw IoError("missing mandatory file " + file(required));
  }

  auto read_column = [](const std::string& path) {
    std::ifstream in = open_input(path);
    std::vector<long long> values;
    std::string line;
    for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
      auto tok = tokens_of(line);
      if (tok.empty()) continue;
      values.push_back(parse_int(tok.front(), where(path, lineno)));
    }
    return values;
  };

  const std::vector<long long> indicator = read_column(file("_graph_indicator.txt"));
  const std::vector<long long> raw_graph_labels = read_column(file("_graph_labels.txt"));
  const std::size_t total_nodes = indicator.size();
  const std::size_t num_graphs = raw_graph_labels.size();
  if (num_graphs == 0) throw FormatError(file("_graph_labels.txt") + ": no graphs");

  // Per-graph node ranges; the indicator is 1-based and non-decreasing in
  // the distributed files but we only rely on membership.
  std::vector<std::vector<std::size_t>> members(num_graphs);
  std::vector<std::size_t> local_index(total_nodes);
  std::vector<std::size_t> owner(total_nodes);
  for (std::size_t v = 0; v < total_nodes; ++v) {
    const long long gid = indicator[v];
    if (gid < 1 || static_cast<std::size_t>(gid) > num_graphs) {
      throw FormatError(where(file("_graph_indicator.txt"), v + 1) + ": graph id " +
                        std::to_string(gid) + " out of range");
    }
    owner[v] = static_cast<std::size_t>(gid - 1);
    local_index[v] = members[owner[v]].size();
    members[owner[v]].push_back(v);
  }

  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> edges(num_graphs);
  {
    const std::string path = file("_A.txt");
    std::ifstream in = open_input(path);
    std::string line;
    for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
      auto tok = tokens_of(line);
      if (tok.empty()) continue;
      const std::string loc = where(path, lineno);
      if (tok.size() != 2) throw FormatError(loc + ": expected 'i, j'");
      const long long a = parse_int(tok[0], loc);
      const long long b = parse_int(tok[1], loc);
      if (a < 1 || b < 1 || static_cast<std::size_t>(a) > total_nodes ||
          static_cast<std::size_t>(b) > total_nodes) {
        throw FormatError(loc + ": node id out of range");
      }
      const std::size_t u = static_cast<std::size_t>(a - 1);
      const std::size_t v = static_cast<std::size_t>(b - 1);
      if (owner[u] != owner[v]) {
        throw FormatError(loc + ": edge " + std::to_string(a) + "-" + std::to_string(b) +
                          " crosses graph boundary");
      }
      edges[owner[u]].emplace_back(local_index[u], local_index[v]);
    }
  }

  std::vector<long long> raw_node_labels;
  const bool has_node_labels = fs::exists(file("_node_labels.txt"));
  if (has_node_labels) {
    raw_node_labels = read_column(file("_node_labels.txt"));
    if (raw_node_labels.size() != total_nodes) {
      throw FormatError(file("_node_labels.txt") + ": expected one label per node");
    }
  }
  const auto node_codes = dense_codes(raw_node_labels);
  const auto graph_codes = dense_codes(raw_graph_labels);

  GraphDataset ds;
  ds.name = name;
  ds.num_classes = static_cast<int>(graph_codes.size());
  ds.feature_dim = has_node_labels ? node_codes.size() : 0;
  ds.graphs.reserve(num_graphs);
  for (std::size_t gi = 0; gi < num_graphs; ++gi) {
    Graph g;
    const std::size_t n = members[gi].size();
    g.adjacency = adjacency_from_edges(n, edges[gi]);
    g.features = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(ds.feature_dim));
    if (has_node_labels) {
      for (std::size_t k = 0; k < n; ++k) {
        const int code = node_codes.at(raw_node_labels[members[gi][k]]);
        g.features(static_cast<Eigen::Index>(k), code) = 1.0;
      }
    }
    g.graph_label = graph_codes.at(raw_graph_labels[gi]);
    ds.graphs.push_back(std::move(g));
  }
  ds.validate();
  return ds;
}

GraphDataset synthesize_degree_features(const GraphDataset& dataset, int max_degree) {
  if (max_degree < 1) throw ConfigError("max_degree must be at least 1");
  GraphDataset out = dataset;
  out.feature_dim = static_cast<std::size_t>(max_degree) + 1;
  for (Graph& g : out.graphs) {
    const auto deg = g.degrees();
    g.features = Matrix::Zero(static_cast<Eigen::Index>(g.num_nodes()), max_degree + 1);
    for (std::size_t v = 0; v < deg.size(); ++v) {
      const auto slot = std::min<std::size_t>(deg[v], static_cast<std::size_t>(max_degree));
      g.features(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(slot)) = 1.0;
    }
  }
  return out;
}

// ---- JSON -----------------------------------------------------------------

Graph graph_from_json(const json& j) {
  try {
    Graph g;
    const std::size_t n = j.at("n").get<std::size_t>();
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    if (j.contains("edges")) {
      for (const auto& e : j.at("edges")) {
        if (e.size() != 2) throw FormatError("edge entries must be [i, j]");
        edges.emplace_back(e[0].get<std::size_t>(), e[1].get<std::size_t>());
      }
    }
    g.adjacency = adjacency_from_edges(n, edges);
    if (j.contains("features") && !j.at("features").empty()) {
      const auto& rows = j.at("features");
      if (rows.size() != n) throw FormatError("features must have one row per node");
      const std::size_t f = rows[0].size();
      g.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(f));
      for (std::size_t i = 0; i < n; ++i) {
        if (rows[i].size() != f) throw FormatError("inconsistent feature width");
        for (std::size_t k = 0; k < f; ++k) {
          g.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k].get<double>();
        }
      }
    } else {
      g.features.resize(static_cast<Eigen::Index>(n), 0);
    }
    if (j.contains("node_labels") && !j.at("node_labels").is_null()) {
      g.node_labels = j.at("node_labels").get<std::vector<int>>();
    }
    if (j.contains("graph_label") && !j.at("graph_label").is_null()) {
      g.graph_label = j.at("graph_label").get<int>();
    }
    g.validate();
    return g;
  } catch (const json::exception& e) {
    throw FormatError(std::string("graph JSON: ") + e.what());
  }
}

json graph_to_json(const Graph& g) {
  json j;
  j["n"] = g.num_nodes();
  json edges = json::array();
  for (Eigen::Index r = 0; r < g.adjacency.outerSize(); ++r) {
    for (SparseMatrix::InnerIterator it(g.adjacency, r); it; ++it) {
      if (it.row() < it.col()) edges.push_back({it.row(), it.col()});
    }
  }
  j["edges"] = std::move(edges);
  json feats = json::array();
  for (Eigen::Index i = 0; i < g.features.rows(); ++i) {
    feats.push_back(std::vector<double>(g.features.row(i).begin(), g.features.row(i).end()));
  }
  j["features"] = std::move(feats);
  if (!g.node_labels.empty()) j["node_labels"] = g.node_labels;
  if (g.graph_label) j["graph_label"] = *g.graph_label;
  return j;
}

GraphDataset dataset_from_json(const json& j, const std::string& fallback_name) {
  GraphDataset ds;
  const json* graphs = &j;
  if (j.is_object()) {
    ds.name = j.value("name", fallback_name);
    graphs = &j.at("graphs");
  } else {
    ds.name = fallback_name;
  }
  int max_label = -1;
  for (const auto& gj : *graphs) {
    ds.graphs.push_back(graph_from_json(gj));
    max_label = std::max(max_label, ds.graphs.back().graph_label.value_or(-1));
  }
  if (ds.graphs.empty()) throw FormatError("dataset JSON has no graphs");
  ds.feature_dim = ds.graphs.front().feature_dim();
  ds.num_classes = j.is_object() && j.contains("num_classes") ? j.at("num_classes").get<int>()
                                                             : max_label + 1;
  ds.validate();
  return ds;
}

json dataset_to_json(const GraphDataset& d) {
  json graphs = json::array();
  for (const Graph& g : d.graphs) graphs.push_back(graph_to_json(g));
  return json{{"name", d.name}, {"num_classes", d.num_classes}, {"graphs", std::move(graphs)}};
}

namespace {
json read_json_file(const std::string& path) {
  std::ifstream in = open_input(path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
}
}  // namespace

Graph load_graph_json(const std::string& path) { return graph_from_json(read_json_file(path)); }

GraphDataset load_dataset_json(const std::string& path) {
  return dataset_from_json(read_json_file(path), fs::path(path).stem().string());
}

// ---- splits ---------------------------------------------------------------

SplitSpec build_node_splits(const Graph& graph, std::uint64_t seed, const std::string& scheme,
                            const NodeSplitOptions& options) {
  const std::size_t n = graph.num_nodes();
  if (graph.node_labels.size() != n) throw ConfigError("node splits require node labels");
  Rng rng(seed);
  SplitSpec split;
  if (scheme == "planetoid") {
    const int classes = *std::max_element(graph.node_labels.begin(), graph.node_labels.end()) + 1;
    std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(classes));
    for (std::size_t v = 0; v < n; ++v) by_class[static_cast<std::size_t>(graph.node_labels[v])].push_back(v);
    std::vector<bool> used(n, false);
    for (int c = 0; c < classes; ++c) {
      auto& members = by_class[static_cast<std::size_t>(c)];
      if (members.size() < options.per_class_train) {
        throw ConfigError("class " + std::to_string(c) + " has " + std::to_string(members.size()) +
                          " nodes, fewer than " + std::to_string(options.per_class_train));
      }
      rng.shuffle(members);
      for (std::size_t k = 0; k < options.per_class_train; ++k) {
        split.train.push_back(members[k]);
        used[members[k]] = true;
      }
    }
    std::vector<std::size_t> rest;
    for (std::size_t v = 0; v < n; ++v) {
      if (!used[v]) rest.push_back(v);
    }
    if (rest.size() < options.num_val + options.num_test) {
      throw ConfigError("graph too small for the planetoid split sizes");
    }
    rng.shuffle(rest);
    split.val.assign(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(options.num_val));
    split.test.assign(rest.begin() + static_cast<std::ptrdiff_t>(options.num_val),
                      rest.begin() + static_cast<std::ptrdiff_t>(options.num_val + options.num_test));
  } else if (scheme == "random") {
    if (options.train_fraction <= 0.0 || options.val_fraction < 0.0 ||
        options.train_fraction + options.val_fraction >= 1.0) {
      throw ConfigError("random split fractions must satisfy 0 < train, 0 <= val, train + val < 1");
    }
    auto order = rng.permutation(n);
    const auto n_train = static_cast<std::size_t>(options.train_fraction * static_cast<double>(n));
    const auto n_val = static_cast<std::size_t>(options.val_fraction * static_cast<double>(n));
    split.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    split.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                     order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    split.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
  } else {
    throw ConfigError("unknown split scheme '" + scheme + "'");
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.val.begin(), split.val.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

std::vector<SplitSpec> build_folds(const GraphDataset& dataset, int k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("k must be at least 2");
  if (dataset.size() == 0) throw ConfigError("cannot fold an empty dataset");
  if (static_cast<std::size_t>(k) > dataset.size()) {
    throw ConfigError("k = " + std::to_string(k) + " exceeds dataset size " +
                      std::to_string(dataset.size()));
  }
  Rng rng(seed);
  std::map<int, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    by_label[dataset.graphs[i].graph_label.value_or(-1)].push_back(i);
  }
  // Dealing the class-grouped order round-robin keeps both the class mix and
  // the fold sizes balanced.
  std::vector<std::size_t> order;
  for (auto& [label, members] : by_label) {
    rng.shuffle(members);
    order.insert(order.end(), members.begin(), members.end());
  }
  std::vector<std::vector<std::size_t>> test(static_cast<std::size_t>(k));
  for (std::size_t p = 0; p < order.size(); ++p) test[p % static_cast<std::size_t>(k)].push_back(order[p]);

  std::vector<SplitSpec> folds(static_cast<std::size_t>(k));
  for (int f = 0; f < k; ++f) {
    SplitSpec& s = folds[static_cast<std::size_t>(f)];
    s.fold_id = f;
    s.test = test[static_cast<std::size_t>(f)];
    std::sort(s.test.begin(), s.test.end());
    for (int o = 0; o < k; ++o) {
      if (o == f) continue;
      const auto& t = test[static_cast<std::size_t>(o)];
      s.train.insert(s.train.end(), t.begin(), t.end());
    }
    std::sort(s.train.begin(), s.train.end());
  }
  return folds;
}

}  // namespace uhgr
