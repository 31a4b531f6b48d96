#pragma once

// Frozen-embedding evaluation: embedding extraction, a softmax-regression
// probe, and node/graph benchmark protocols.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "uhgr/model.hpp"
#include "uhgr/trainer.hpp"

namespace uhgr {

struct EmbeddingSet {
  Matrix node_embeddings;  // n×f' for a single-graph task, empty otherwise
  Matrix graph_summaries;  // one row per graph
  std::uint64_t config_hash = 0;
  std::string dataset;
  std::string encoder;

  Eigen::Index dim() const;
};

// Eval-mode passes (running batch-norm statistics, nothing updated).
EmbeddingSet extract_node_embeddings(const UhgrModel& model, const Graph& graph);
EmbeddingSet extract_graph_summaries(const UhgrModel& model, const std::vector<const Graph*>& graphs);
EmbeddingSet extract_graph_summaries(const UhgrModel& model, const GraphDataset& dataset);

// One JSON header line, then node rows and summary rows as little-endian
// doubles.
std::string serialize_embeddings(const EmbeddingSet& set);
EmbeddingSet deserialize_embeddings(const std::string& bytes);
void save_embeddings(const EmbeddingSet& set, const std::string& path);
EmbeddingSet load_embeddings(const std::string& path);

struct ProbeOptions {
  double l2 = 1e-4;
  int max_iterations = 3000;
  double grad_tol = 1e-6;
};

// Multinomial logistic regression fitted by full-batch gradient descent
// with step 1/L, L the smoothness bound of the regularised loss.
struct LinearProbe {
  Matrix weight;  // f×C
  Matrix bias;    // 1×C
  int iterations = 0;
  double final_grad_norm = 0.0;

  static LinearProbe fit(const Matrix& x, const std::vector<int>& labels,
                         const std::vector<std::size_t>& train, int num_classes, std::uint64_t seed,
                         const ProbeOptions& options = {});
  Matrix logits(const Matrix& x) const;
  std::vector<int> predict(const Matrix& x) const;
  double accuracy(const Matrix& x, const std::vector<int>& labels,
                  const std::vector<std::size_t>& indices) const;
};

struct EvalReport {
  std::string task;  // node | graph
  std::string dataset;
  std::string encoder;
  double mean = 0.0;
  double std = 0.0;  // population
  int runs = 0;
  std::vector<double> per_run;
  std::uint64_t config_hash = 0;

  static EvalReport summarize(std::string task, std::string dataset, std::string encoder,
                              std::vector<double> per_run, std::uint64_t config_hash);
  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
  // task,dataset,encoder,mean,std,runs
  std::string csv_row() const;
  static std::string csv_header() { return "task,dataset,encoder,mean,std,runs"; }
};

// Probe fitted `runs` times (seeds seed, seed+1, ...) on a fixed split;
// test accuracy per run.
EvalReport node_benchmark(const Matrix& embeddings, const Graph& graph, const SplitSpec& split,
                          int runs, std::uint64_t seed, const ProbeOptions& probe = {});
EvalReport node_benchmark(const UhgrModel& model, const Graph& graph, const SplitSpec& split,
                          int runs, std::uint64_t seed, const ProbeOptions& probe = {});
// Stretch protocol: a full unsupervised retraining per run (model seed
// config.seed + r) followed by one probe fit.
EvalReport node_benchmark_retrain(const ModelConfig& config, const Graph& graph,
                                  const SplitSpec& split, int runs, const ProbeOptions& probe = {},
                                  const TrainOptions& train = {});

struct GraphBenchmarkOptions {
  int folds = 10;
  std::uint64_t seed = 0;
  ProbeOptions probe;
  TrainOptions train;
  std::function<void(int fold, double accuracy)> on_fold;
};

// Per fold: train on the fold's training graphs, embed every graph, fit the
// probe on training summaries, score the held-out fold.
EvalReport graph_benchmark(const ModelConfig& config, const GraphDataset& dataset,
                           const GraphBenchmarkOptions& options = {});
// Cross-validated probe over fixed summaries (no retraining).
EvalReport graph_benchmark_frozen(const Matrix& summaries, const GraphDataset& dataset,
                                  const GraphBenchmarkOptions& options = {});

}  // namespace uhgr
