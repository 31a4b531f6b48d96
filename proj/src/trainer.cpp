#include "uhgr/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>

#include "uhgr/random.hpp"

namespace uhgr {

using ad::Tape;
using ad::Var;

void adam_step(const std::vector<Parameter*>& params, AdamState& state, const AdamOptions& o) {
  if (state.m.size() != params.size()) {
    state.m.clear();
    state.v.clear();
    for (const Parameter* p : params) {
      state.m.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
      state.v.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    }
    state.step = 0;
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) continue;
    Matrix& m = state.m[i];
    Matrix& v = state.v[i];
    m = o.beta1 * m + (1.0 - o.beta1) * p.grad;
    v = o.beta2 * v + (1.0 - o.beta2) * p.grad.cwiseProduct(p.grad);
    if (o.weight_decay != 0.0) p.value *= 1.0 - o.lr * o.weight_decay;
    p.value.array() -= o.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + o.eps);
  }
}

std::string TrainLog::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "epoch,loss,seconds\n";
  for (const EpochRecord& r : epochs) out << r.epoch << ',' << r.loss << ',' << r.seconds << '\n';
  return out.str();
}

namespace {

constexpr std::uint64_t kTrainStream = 0x7261696e;  // separates corruption draws from init

using Clock = std::chrono::steady_clock;

// Contrastive loss of one positive graph against negatives taken from
// `negative` (already corrupted).
Var contrastive_loss(Tape& tape, const UhgrModel& model, const GraphTensors& positive,
                     const GraphTensors& negative, bool update_stats) {
  const ForwardOptions pos_opts{ad::Mode::kTrain, update_stats};
  const ForwardOptions neg_opts{ad::Mode::kTrain, false};
  UhgrModel::Forward fw = model.forward(tape, positive, pos_opts, model.config().aux_losses);
  Var neg_nodes = model.encode(tape, negative, neg_opts);
  const Discriminator& d = model.discriminator();
  Var loss = ad::bce_logits(d.logits(tape, fw.nodes, fw.summary), d.logits(tape, neg_nodes, fw.summary));
  if (fw.hierarchy.aux_loss) loss = ad::add(loss, *fw.hierarchy.aux_loss);
  return loss;
}

void check_gradients(const std::vector<Parameter*>& params) {
  for (const Parameter* p : params) {
    if (p->grad.size() != 0 && !p->grad.allFinite()) {
      throw NumericError("non-finite gradient for " + p->name);
    }
  }
}

// Finite-difference check of one random trainable entry.
double spot_check(UhgrModel& model, const GraphTensors& positive, const GraphTensors& negative,
                  Rng& rng) {
  std::vector<Parameter*> trainable = model.params().trainable();
  Parameter* target = trainable[static_cast<std::size_t>(rng.below(trainable.size()))];
  ad::GradCheckOptions opts;
  opts.max_entries_per_param = 1;
  opts.seed = rng.next();
  auto build = [&](Tape& tape) { return contrastive_loss(tape, model, positive, negative, false); };
  const ad::GradCheckResult r = ad::gradient_check(build, {target}, opts);
  model.params().zero_grad();
  if (r.max_rel_error > 1e-3) {
    throw NumericError("gradient spot check failed for " + r.worst_param + "[" +
                       std::to_string(r.worst_index) + "]: relative error " +
                       std::to_string(r.max_rel_error));
  }
  return r.max_rel_error;
}

// Shared epoch loop. `run_epoch` returns the epoch loss; `snapshot_before`
// chooses whether the best state is the one entering the epoch (exact for a
// single step per epoch) or the one leaving it.
TrainLog run_loop(UhgrModel& model, const TrainOptions& options, bool snapshot_before,
                  const std::function<double(int, TrainLog&)>& run_epoch) {
  const ModelConfig& cfg = model.config();
  TrainLog log;
  log.seed = cfg.seed;
  log.best_loss = std::numeric_limits<double>::infinity();
  std::optional<std::vector<Matrix>> best;
  int wait = 0;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto t0 = Clock::now();
    std::vector<Matrix> entering;
    if (snapshot_before) entering = model.params().snapshot();
    double loss = 0.0;
    try {
      loss = run_epoch(epoch, log);
      if (!std::isfinite(loss)) throw NumericError("non-finite loss");
    } catch (const NumericError& e) {
      if (best) model.params().restore(*best);
      throw NumericError(std::string(e.what()) + " at epoch " + std::to_string(epoch) +
                         (best ? "; parameters restored to epoch " + std::to_string(log.best_epoch)
                               : "; no finite epoch completed"));
    }
    const double seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    log.epochs.push_back({epoch, loss, seconds});
    log.stopping_epoch = epoch;
    if (options.on_epoch) options.on_epoch(log.epochs.back());

    if (loss < log.best_loss - cfg.min_delta) {
      log.best_loss = loss;
      log.best_epoch = epoch;
      best = snapshot_before ? std::move(entering) : model.params().snapshot();
      wait = 0;
    } else {
      ++wait;
    }
    if (wait >= cfg.patience) break;
  }
  if (best) model.params().restore(*best);
  return log;
}

AdamOptions adam_from(const ModelConfig& cfg) {
  AdamOptions o;
  o.lr = cfg.lr;
  o.weight_decay = cfg.weight_decay;
  return o;
}

Eigen::Index max_nodes_of(const std::vector<const Graph*>& graphs) {
  Eigen::Index n = 0;
  for (const Graph* g : graphs) n = std::max<Eigen::Index>(n, static_cast<Eigen::Index>(g->num_nodes()));
  return n;
}

Eigen::Index input_dim_of(const std::vector<const Graph*>& graphs) {
  if (graphs.empty()) throw ConfigError("training needs at least one graph");
  const Eigen::Index f = static_cast<Eigen::Index>(graphs.front()->feature_dim());
  for (const Graph* g : graphs) {
    if (static_cast<Eigen::Index>(g->feature_dim()) != f) {
      throw ShapeError("graphs disagree on feature width");
    }
  }
  return f;
}

}  // namespace

TrainLog train_transductive(UhgrModel& model, const Graph& graph, const TrainOptions& options) {
  const GraphTensors tensors = GraphTensors::from(graph);
  if (tensors.feature_dim() != model.input_dim()) {
    throw ShapeError("model expects " + std::to_string(model.input_dim()) +
                     " input features, graph has " + std::to_string(tensors.feature_dim()));
  }
  const std::vector<Parameter*> trainable = model.params().trainable();
  AdamState adam;
  const AdamOptions adam_opts = adam_from(model.config());
  Rng rng = Rng(model.config().seed).fork(kTrainStream);

  auto epoch_fn = [&](int, TrainLog& log) {
    const GraphTensors corrupted =
        tensors.with_permuted_features(rng.permutation(static_cast<std::size_t>(tensors.num_nodes())));
    if (model.config().debug_gradcheck) {
      log.max_gradcheck_error =
          std::max(log.max_gradcheck_error, spot_check(model, tensors, corrupted, rng));
    }
    model.params().zero_grad();
    Tape tape;
    Var loss = contrastive_loss(tape, model, tensors, corrupted, true);
    const double value = loss.scalar();
    tape.backward(loss);
    check_gradients(trainable);
    adam_step(trainable, adam, adam_opts);
    return value;
  };
  return run_loop(model, options, true, epoch_fn);
}

TrainLog train_inductive(UhgrModel& model, const std::vector<const Graph*>& graphs,
                         const TrainOptions& options) {
  if (graphs.size() < 2) throw ConfigError("inductive training needs at least two graphs");
  std::vector<GraphTensors> tensors;
  tensors.reserve(graphs.size());
  for (const Graph* g : graphs) tensors.push_back(GraphTensors::from(*g));
  if (tensors.front().feature_dim() != model.input_dim()) {
    throw ShapeError("model expects " + std::to_string(model.input_dim()) +
                     " input features, graphs have " + std::to_string(tensors.front().feature_dim()));
  }
  const std::vector<Parameter*> trainable = model.params().trainable();
  AdamState adam;
  const AdamOptions adam_opts = adam_from(model.config());
  Rng rng = Rng(model.config().seed).fork(kTrainStream);

  auto epoch_fn = [&](int, TrainLog& log) {
    const std::vector<std::size_t> order = rng.permutation(graphs.size());
    double total = 0.0;
    bool checked = false;
    for (std::size_t i : order) {
      const std::size_t j = corrupt_inductive(graphs.size(), i, rng);
      if (model.config().debug_gradcheck && !checked) {
        log.max_gradcheck_error =
            std::max(log.max_gradcheck_error, spot_check(model, tensors[i], tensors[j], rng));
        checked = true;
      }
      model.params().zero_grad();
      Tape tape;
      Var loss = contrastive_loss(tape, model, tensors[i], tensors[j], true);
      total += loss.scalar();
      tape.backward(loss);
      check_gradients(trainable);
      adam_step(trainable, adam, adam_opts);
    }
    return total / static_cast<double>(graphs.size());
  };
  return run_loop(model, options, false, epoch_fn);
}

TrainResult train_unsupervised(const ModelConfig& config, const Graph& graph,
                               const TrainOptions& options) {
  TrainResult out;
  out.state.model = std::make_unique<UhgrModel>(config, static_cast<Eigen::Index>(graph.feature_dim()),
                                                static_cast<Eigen::Index>(graph.num_nodes()));
  out.log = train_transductive(*out.state.model, graph, options);
  out.state.epoch = out.log.stopping_epoch;
  out.state.best_loss = out.log.best_loss;
  return out;
}

TrainResult train_unsupervised(const ModelConfig& config, const std::vector<const Graph*>& graphs,
                               const TrainOptions& options) {
  TrainResult out;
  out.state.model = std::make_unique<UhgrModel>(config, input_dim_of(graphs), max_nodes_of(graphs));
  out.log = train_inductive(*out.state.model, graphs, options);
  out.state.epoch = out.log.stopping_epoch;
  out.state.best_loss = out.log.best_loss;
  return out;
}

TrainResult train_unsupervised(const ModelConfig& config, const GraphDataset& dataset,
                               const TrainOptions& options) {
  std::vector<const Graph*> graphs;
  for (const Graph& g : dataset.graphs) graphs.push_back(&g);
  return train_unsupervised(config, graphs, options);
}

}  // namespace uhgr
