#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "uhgr/tensor.hpp"

namespace uhgr {

// Undirected simple graph with node features and optional labels.
struct Graph {
  SparseMatrix adjacency;  // n×n, symmetric, entries in {0,1}, zero diagonal
  Matrix features;         // n×f
  std::vector<int> node_labels;  // empty when the graph carries no node labels
  std::optional<int> graph_label;

  std::size_t num_nodes() const { return static_cast<std::size_t>(adjacency.rows()); }
  std::size_t feature_dim() const { return static_cast<std::size_t>(features.cols()); }
  std::size_t num_edges() const { return static_cast<std::size_t>(adjacency.nonZeros() / 2); }
  std::vector<std::size_t> degrees() const;

  // Throws FormatError when an invariant is violated. `num_classes` < 0
  // skips the node-label range check.
  void validate(int num_classes = -1) const;
};

struct GraphDataset {
  std::vector<Graph> graphs;
  int num_classes = 0;
  std::size_t feature_dim = 0;
  std::string name;

  std::size_t size() const { return graphs.size(); }
  std::vector<int> labels() const;
  void validate() const;
};

// Disjoint index lists: node indices for one graph, graph indices for a
// dataset.
struct SplitSpec {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
  std::optional<int> fold_id;
};

// Builds a symmetric binary adjacency from an undirected edge list. Self
// loops and repeated edges (in either direction) are dropped.
SparseMatrix adjacency_from_edges(std::size_t n,
                                  const std::vector<std::pair<std::size_t, std::size_t>>& edges);

// Scales each row to unit sum; rows summing to zero are left untouched.
void row_normalize(Matrix& features);

// ---- loaders --------------------------------------------------------------

struct CitationLoadInfo {
  std::size_t edge_lines = 0;        // lines read from the cites file
  std::size_t self_citations = 0;    // dropped
  std::size_t unknown_endpoints = 0; // dropped (lenient mode only)
  std::size_t undirected_edges = 0;  // stored after de-duplication
  std::vector<std::string> class_names;
  std::vector<std::string> node_ids;
};

struct CitationLoadOptions {
  // Drop citation lines naming ids absent from the content file instead of
  // rejecting the file. Some public Citeseer copies need this.
  bool skip_unknown_ids = false;
};

// `<id> <features...> <class>` content lines plus `<cited> <citing>` lines.
// Features are row-normalised; labels are dense in sorted class-name order.
Graph load_citation_graph(const std::string& content_path, const std::string& cites_path,
                          const CitationLoadOptions& options = {}, CitationLoadInfo* info = nullptr);

// TU collection layout: <dir>/<name>_A.txt, _graph_indicator.txt,
// _graph_labels.txt and optionally _node_labels.txt (one-hot encoded as
// features). Without node labels the graphs have zero feature columns.
GraphDataset load_tu_dataset(const std::string& dir, const std::string& name);

// One-hot of min(degree, max_degree) as features; feature_dim = max_degree+1.
GraphDataset synthesize_degree_features(const GraphDataset& dataset, int max_degree);

// Canonical JSON: {"n", "edges": [[i,j],...], "features": [[...]],
// "node_labels": [...], "graph_label": int}. Indices are 0-based.
Graph graph_from_json(const nlohmann::json& j);
nlohmann::json graph_to_json(const Graph& g);
// {"name", "graphs": [...]} (or a bare array of graphs).
GraphDataset dataset_from_json(const nlohmann::json& j, const std::string& fallback_name = "json");
nlohmann::json dataset_to_json(const GraphDataset& d);
Graph load_graph_json(const std::string& path);
GraphDataset load_dataset_json(const std::string& path);

// ---- splits ---------------------------------------------------------------

struct NodeSplitOptions {
  std::size_t per_class_train = 20;  // planetoid
  std::size_t num_val = 500;         // planetoid
  std::size_t num_test = 1000;       // planetoid
  double train_fraction = 0.1;       // random
  double val_fraction = 0.1;         // random
};

// scheme "planetoid": per_class_train labelled nodes per class, then num_val
// and num_test from the remainder. scheme "random": fractions of a shuffled
// node order. Deterministic in `seed`.
SplitSpec build_node_splits(const Graph& graph, std::uint64_t seed, const std::string& scheme,
                            const NodeSplitOptions& options = {});

// Stratified k folds; every graph lands in exactly one test fold and the
// test fold sizes differ by at most one. val is left empty.
std::vector<SplitSpec> build_folds(const GraphDataset& dataset, int k, std::uint64_t seed);

}  // namespace uhgr
