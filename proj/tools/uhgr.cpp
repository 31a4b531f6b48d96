// uhgr: train / embed / eval / export

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "uhgr/checkpoint.hpp"
#include "uhgr/datasets.hpp"
#include "uhgr/evaluator.hpp"
#include "uhgr/export.hpp"
#include "uhgr/trainer.hpp"

namespace fs = std::filesystem;
using namespace uhgr;

namespace {

enum ExitCode {
  kOk = 0,
  kOther = 1,
  kUsage = 2,
  kDataset = 3,
  kMissingCheckpoint = 4,
  kDimMismatch = 5,
  kIntegrity = 6,
  kNumeric = 7,
};

struct Failure {
  int code;
  std::string kind;
  std::string message;
};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    out += c;
  }
  return out;
}

int report(const Failure& f) {
  std::cerr << "error code=" << f.kind << " message=\"" << escape(f.message) << "\"\n";
  return f.code;
}

Failure classify(const Error& e) {
  if (dynamic_cast<const ShapeError*>(&e)) return {kDimMismatch, "dim_mismatch", e.what()};
  if (dynamic_cast<const IntegrityError*>(&e)) return {kIntegrity, "integrity", e.what()};
  if (dynamic_cast<const NumericError*>(&e)) return {kNumeric, "numeric", e.what()};
  if (dynamic_cast<const ConfigError*>(&e)) return {kUsage, "usage", e.what()};
  return {kOther, e.kind(), e.what()};
}

LoadedData open_dataset(const std::string& spec) {
  try {
    return load_data(spec);
  } catch (const Error& e) {
    throw Failure{kDataset, "dataset", e.what()};
  }
}

ModelState open_checkpoint(const std::string& path) {
  if (path.empty()) throw Failure{kUsage, "usage", "--checkpoint is required"};
  if (!fs::is_regular_file(path)) {
    throw Failure{kMissingCheckpoint, "missing_checkpoint", "checkpoint not found: " + path};
  }
  return load_checkpoint(path);
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  write_file_atomic(path, text);
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
  std::string dataset;
  std::string config;
  std::optional<std::string> encoder;
  std::optional<int> heads;
  std::optional<long> hidden;
  std::optional<long> embed;
  std::optional<std::string> ratios;
  std::optional<int> epochs;
  std::optional<int> patience;
  std::optional<double> lr;
  std::optional<std::uint64_t> seed;
  std::optional<long> max_clusters;
  bool aux_losses = false;
  bool debug_gradcheck = false;
  std::string checkpoint;
  std::string out;
  bool quiet = false;
};

ModelConfig build_config(const TrainArgs& a) {
  ModelConfig c = a.config.empty() ? ModelConfig{} : ModelConfig::load(a.config);
  if (a.encoder) c.set("encoder", *a.encoder);
  if (a.heads) c.heads = *a.heads;
  if (a.hidden) c.hidden_dim = *a.hidden;
  if (a.embed) c.embed_dim = *a.embed;
  if (a.ratios) c.set("pool_ratios", *a.ratios);
  if (a.epochs) c.max_epochs = *a.epochs;
  if (a.patience) c.patience = *a.patience;
  if (a.lr) c.lr = *a.lr;
  if (a.seed) c.seed = *a.seed;
  if (a.max_clusters) c.max_clusters = *a.max_clusters;
  if (a.aux_losses) c.aux_losses = true;
  if (a.debug_gradcheck) c.debug_gradcheck = true;
  c.validate();
  return c;
}

void add_model_flags(CLI::App* cmd, TrainArgs& a) {
  cmd->add_option("--config", a.config, "Flat key=value config file");
  cmd->add_option("--encoder", a.encoder, "gcn or gat");
  cmd->add_option("--heads", a.heads, "Attention heads");
  cmd->add_option("--hidden", a.hidden, "Hidden width");
  cmd->add_option("--embed", a.embed, "Embedding width");
  cmd->add_option("--ratios", a.ratios, "Pooling ratios, comma separated");
  cmd->add_option("--epochs", a.epochs, "Maximum epochs");
  cmd->add_option("--patience", a.patience, "Early-stopping patience");
  cmd->add_option("--lr", a.lr, "Learning rate");
  cmd->add_option("--seed", a.seed, "Random seed");
  cmd->add_option("--max-clusters", a.max_clusters, "Cap on assignment width");
  cmd->add_flag("--aux-losses", a.aux_losses, "Add link and entropy regularisers");
  cmd->add_flag("--debug-gradcheck", a.debug_gradcheck, "Finite-difference spot check every epoch");
}

int cmd_train(const TrainArgs& a) {
  const ModelConfig config = build_config(a);
  LoadedData data = open_dataset(a.dataset);
  TrainOptions opts;
  if (!a.quiet) {
    opts.on_epoch = [](const EpochRecord& r) {
      std::fprintf(stderr, "epoch %d loss %.6f (%.2fs)\n", r.epoch, r.loss, r.seconds);
    };
  }

  ModelState state;
  std::vector<const Graph*> graphs;
  if (data.transductive) {
    state.model = std::make_unique<UhgrModel>(config, static_cast<Eigen::Index>(data.graph.feature_dim()),
                                              static_cast<Eigen::Index>(data.graph.num_nodes()));
  } else {
    Eigen::Index max_nodes = 0;
    for (const Graph& g : data.dataset.graphs) {
      graphs.push_back(&g);
      max_nodes = std::max<Eigen::Index>(max_nodes, static_cast<Eigen::Index>(g.num_nodes()));
    }
    state.model = std::make_unique<UhgrModel>(config, static_cast<Eigen::Index>(data.dataset.feature_dim),
                                              max_nodes);
  }

  TrainLog log;
  try {
    log = data.transductive ? train_transductive(*state.model, data.graph, opts)
                            : train_inductive(*state.model, graphs, opts);
  } catch (const NumericError& e) {
    const std::string rescue = a.checkpoint + ".lastgood";
    save_checkpoint(state, rescue);
    throw NumericError(std::string(e.what()) + "; last good state written to " + rescue);
  }
  state.epoch = log.stopping_epoch;
  state.best_loss = log.best_loss;
  save_checkpoint(state, a.checkpoint);
  write_file_atomic(a.out.empty() ? a.checkpoint + ".log.csv" : a.out, log.to_csv());
  std::cout << "trained " << data.name << " epochs=" << log.stopping_epoch << " best_epoch=" << log.best_epoch
            << " best_loss=" << log.best_loss << " checkpoint=" << a.checkpoint << "\n";
  return kOk;
}

// ---- embed ----------------------------------------------------------------

int cmd_embed(const std::string& dataset, const std::string& checkpoint, const std::string& out) {
  ModelState state = open_checkpoint(checkpoint);
  LoadedData data = open_dataset(dataset);
  EmbeddingSet set = data.transductive ? extract_node_embeddings(*state.model, data.graph)
                                       : extract_graph_summaries(*state.model, data.dataset);
  set.dataset = data.name;
  save_embeddings(set, out);
  std::cout << "embedded " << data.name << " nodes=" << set.node_embeddings.rows()
            << " summaries=" << set.graph_summaries.rows() << " dim=" << set.dim() << " out=" << out << "\n";
  return kOk;
}

// ---- eval -----------------------------------------------------------------

struct EvalArgs {
  std::string dataset;
  std::string checkpoint;
  std::string embeddings;
  int runs = 50;
  int folds = 10;
  std::uint64_t seed = 0;
  std::string split = "planetoid";
  bool retrain = false;
  bool frozen = false;
  std::string out;
  std::string csv;
};

int cmd_eval(const EvalArgs& a) {
  if (a.checkpoint.empty() && a.embeddings.empty()) {
    throw Failure{kUsage, "usage", "eval needs --checkpoint or --embeddings"};
  }
  std::optional<ModelState> state;
  if (!a.checkpoint.empty()) state = open_checkpoint(a.checkpoint);
  std::optional<EmbeddingSet> stored;
  if (!a.embeddings.empty()) {
    if (!fs::is_regular_file(a.embeddings)) {
      throw Failure{kMissingCheckpoint, "missing_embeddings", "embedding file not found: " + a.embeddings};
    }
    stored = load_embeddings(a.embeddings);
    if (state && stored->config_hash != state->model->config().hash()) {
      throw IntegrityError("embedding file was produced by a different model configuration");
    }
  }
  LoadedData data = open_dataset(a.dataset);
  const std::string encoder = state ? state->model->config().encoder_type : stored->encoder;
  const std::uint64_t hash = state ? state->model->config().hash() : stored->config_hash;

  EvalReport report;
  if (data.transductive) {
    const SplitSpec split = build_node_splits(data.graph, a.seed, a.split);
    if (a.retrain) {
      if (!state) throw Failure{kUsage, "usage", "--retrain needs --checkpoint for the model configuration"};
      report = node_benchmark_retrain(state->model->config(), data.graph, split, a.runs);
    } else {
      Matrix x = stored ? stored->node_embeddings : extract_node_embeddings(*state->model, data.graph).node_embeddings;
      if (x.rows() != static_cast<Eigen::Index>(data.graph.num_nodes())) {
        throw ShapeError("embeddings have " + std::to_string(x.rows()) + " rows, dataset has " +
                         std::to_string(data.graph.num_nodes()) + " nodes");
      }
      report = node_benchmark(x, data.graph, split, a.runs, a.seed);
    }
  } else {
    GraphBenchmarkOptions opts;
    opts.folds = a.folds;
    opts.seed = a.seed;
    opts.on_fold = [](int fold, double acc) { std::fprintf(stderr, "fold %d accuracy %.4f\n", fold, acc); };
    if (a.frozen || !state) {
      Matrix x = stored ? stored->graph_summaries
                        : extract_graph_summaries(*state->model, data.dataset).graph_summaries;
      report = graph_benchmark_frozen(x, data.dataset, opts);
    } else {
      report = graph_benchmark(state->model->config(), data.dataset, opts);
    }
  }
  report.dataset = data.name;
  report.encoder = encoder;
  report.config_hash = hash;
  if (!a.out.empty()) write_file_atomic(a.out, report.to_json().dump(2) + "\n");
  if (!a.csv.empty()) write_file_atomic(a.csv, EvalReport::csv_header() + "\n" + report.csv_row() + "\n");
  std::cout << report.csv_row() << "\n";
  return kOk;
}

// ---- export ---------------------------------------------------------------

int cmd_export(const std::string& dataset, const std::string& checkpoint, const std::string& format,
               const std::string& out, std::size_t graph_index) {
  if (format != "json" && format != "dot") throw Failure{kUsage, "usage", "--format must be json or dot"};
  ModelState state = open_checkpoint(checkpoint);
  LoadedData data = open_dataset(dataset);
  const Graph* graph = &data.graph;
  if (!data.transductive) {
    if (graph_index >= data.dataset.size()) {
      throw Failure{kUsage, "usage", "--graph " + std::to_string(graph_index) + " out of range"};
    }
    graph = &data.dataset.graphs[graph_index];
  }
  const HierarchyTrace trace = trace_hierarchy(*state.model, *graph);
  write_text(out, export_hierarchy(trace, *graph, format));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Label-free hierarchical graph embeddings"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train a model without labels");
  train_cmd->add_option("--dataset", train.dataset, "Dataset name or path")->required();
  train_cmd->add_option("--checkpoint", train.checkpoint, "Output checkpoint path")->required();
  train_cmd->add_option("--out", train.out, "Training log path (default <checkpoint>.log.csv)");
  train_cmd->add_flag("--quiet", train.quiet, "No per-epoch progress");
  add_model_flags(train_cmd, train);

  std::string embed_dataset, embed_ckpt, embed_out;
  auto* embed_cmd = app.add_subcommand("embed", "Write frozen embeddings");
  embed_cmd->add_option("--dataset", embed_dataset)->required();
  embed_cmd->add_option("--checkpoint", embed_ckpt)->required();
  embed_cmd->add_option("--out", embed_out)->required();

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Linear-probe evaluation");
  eval_cmd->add_option("--dataset", eval.dataset)->required();
  eval_cmd->add_option("--checkpoint", eval.checkpoint);
  eval_cmd->add_option("--embeddings", eval.embeddings, "Embedding file from `embed`");
  eval_cmd->add_option("--runs", eval.runs, "Probe runs (node task)")->check(CLI::PositiveNumber);
  eval_cmd->add_option("--folds", eval.folds, "Cross-validation folds (graph task)")->check(CLI::Range(2, 1000));
  eval_cmd->add_option("--seed", eval.seed);
  eval_cmd->add_option("--split", eval.split, "planetoid or random")->check(CLI::IsMember({"planetoid", "random"}));
  eval_cmd->add_flag("--retrain", eval.retrain, "Retrain the model for every run (node task)");
  eval_cmd->add_flag("--frozen", eval.frozen, "Probe the given model without per-fold retraining (graph task)");
  eval_cmd->add_option("--out", eval.out, "Report JSON path");
  eval_cmd->add_option("--csv", eval.csv, "Report CSV path");

  std::string ex_dataset, ex_ckpt, ex_format = "json", ex_out;
  std::size_t ex_graph = 0;
  auto* export_cmd = app.add_subcommand("export", "Export the cluster hierarchy");
  export_cmd->add_option("--dataset", ex_dataset)->required();
  export_cmd->add_option("--checkpoint", ex_ckpt)->required();
  export_cmd->add_option("--format", ex_format, "json or dot");
  export_cmd->add_option("--out", ex_out, "Output path (stdout when omitted)");
  export_cmd->add_option("--graph", ex_graph, "Graph index for collections");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report({kUsage, "usage", e.what()});
  }

  try {
    if (*train_cmd) return cmd_train(train);
    if (*embed_cmd) return cmd_embed(embed_dataset, embed_ckpt, embed_out);
    if (*eval_cmd) return cmd_eval(eval);
    if (*export_cmd) return cmd_export(ex_dataset, ex_ckpt, ex_format, ex_out, ex_graph);
  } catch (const Failure& f) {
    return report(f);
  } catch (const Error& e) {
    return report(classify(e));
  } catch (const std::exception& e) {
    return report({kOther, "internal", e.what()});
  }
  return kUsage;
}
