#pragma once

// Unsupervised optimisation of encoder, pooling hierarchy and discriminator
// against the contrastive loss, with loss-patience early stopping.

#include <functional>
#include <string>
#include <vector>

#include "uhgr/checkpoint.hpp"
#include "uhgr/model.hpp"

namespace uhgr {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled
};

struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  long step = 0;
};

// One bias-corrected step over `params` using their current grads.
void adam_step(const std::vector<Parameter*>& params, AdamState& state, const AdamOptions& options);

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
  double seconds = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  int stopping_epoch = 0;
  int best_epoch = 0;
  double best_loss = 0.0;
  std::uint64_t seed = 0;
  // Largest relative error seen by the per-epoch spot check (debug mode).
  double max_gradcheck_error = 0.0;

  // `epoch,loss,seconds` lines with a header row.
  std::string to_csv() const;
};

struct TrainOptions {
  std::function<void(const EpochRecord&)> on_epoch;
};

// Trains `model` in place and leaves it at the best-loss parameters. On a
// non-finite value the best state so far is restored before NumericError
// propagates, so the caller can still persist it.
TrainLog train_transductive(UhgrModel& model, const Graph& graph, const TrainOptions& options = {});
TrainLog train_inductive(UhgrModel& model, const std::vector<const Graph*>& graphs,
                         const TrainOptions& options = {});

struct TrainResult {
  ModelState state;
  TrainLog log;
};

// Builds a fresh model sized for the data, then trains it.
TrainResult train_unsupervised(const ModelConfig& config, const Graph& graph,
                               const TrainOptions& options = {});
TrainResult train_unsupervised(const ModelConfig& config, const GraphDataset& dataset,
                               const TrainOptions& options = {});
TrainResult train_unsupervised(const ModelConfig& config, const std::vector<const Graph*>& graphs,
                               const TrainOptions& options = {});

}  // namespace uhgr
