#pragma once

// Model configuration and the assembled encoder + pooling hierarchy +
// discriminator.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "uhgr/diffpool.hpp"
#include "uhgr/graph.hpp"
#include "uhgr/infomax.hpp"
#include "uhgr/layers.hpp"
#include "uhgr/params.hpp"

namespace uhgr {

struct ModelConfig {
  std::string encoder_type = "gcn";  // gcn | gat
  int heads = 1;
  Eigen::Index hidden_dim = 64;
  Eigen::Index embed_dim = 64;
  int encoder_layers = 1;
  std::vector<double> pool_ratios{0.25, 1.0};
  int interlevel_gcn_layers = 3;
  double lr = 1e-3;
  double weight_decay = 0.0;
  int max_epochs = 1000;
  int patience = 20;
  std::uint64_t seed = 0;
  bool aux_losses = false;
  // Upper bound on assignment width per block.
  Eigen::Index max_clusters = 2048;
  double min_delta = 1e-5;
  bool debug_gradcheck = false;
  // Batch norm after hidden layers; the encoder's last layer never has it.
  bool batch_norm = true;

  void validate() const;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);

  // Flat `key = value` text, `#` comments. Unknown keys are rejected.
  std::string to_text() const;
  // Keys absent from the text keep their value from `base`.
  static ModelConfig parse(const std::string& text, const ModelConfig& base);
  static ModelConfig parse(const std::string& text);
  static ModelConfig load(const std::string& path, const ModelConfig& base);
  static ModelConfig load(const std::string& path);
  // Applies one key/value pair; throws ConfigError for unknown keys or bad values.
  void set(const std::string& key, const std::string& value);

  // FNV-1a over the canonical JSON form.
  std::uint64_t hash() const;
};

std::uint64_t fnv1a(const void* data, std::size_t size,
                    std::uint64_t state = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

// Per-graph constants prepared once: normalised propagation, binary
// adjacency and the feature input (sparse when mostly zero).
struct GraphTensors {
  std::shared_ptr<const SparseMatrix> adjacency;
  Propagation propagation;
  std::shared_ptr<const SparseMatrix> sparse_features;
  std::shared_ptr<const Matrix> dense_features;

  static GraphTensors from(const Graph& graph);
  Eigen::Index num_nodes() const { return adjacency->rows(); }
  Eigen::Index feature_dim() const;
  NodeInput input(ad::Tape& tape) const;
  LevelAdjacency level_adjacency() const { return LevelAdjacency{adjacency, {}}; }
  // Same graph, feature row i replaced by row perm[i].
  GraphTensors with_permuted_features(const std::vector<std::size_t>& perm) const;
};

class UhgrModel {
 public:
  // `max_nodes` fixes the assignment width of each block.
  UhgrModel(const ModelConfig& config, Eigen::Index input_dim, Eigen::Index max_nodes);
  UhgrModel(const UhgrModel&) = delete;
  UhgrModel& operator=(const UhgrModel&) = delete;

  struct Forward {
    ad::Var nodes;    // level-0 node embeddings
    HierarchyVars hierarchy;
    ad::Var summary;  // 1×embed_dim
  };

  ad::Var encode(ad::Tape& tape, const GraphTensors& g, const ForwardOptions& opts) const;
  Forward forward(ad::Tape& tape, const GraphTensors& g, const ForwardOptions& opts,
                  bool aux_losses = false) const;

  const ModelConfig& config() const { return config_; }
  Eigen::Index input_dim() const { return input_dim_; }
  Eigen::Index max_nodes() const { return max_nodes_; }
  ParameterStore& params() { return store_; }
  const ParameterStore& params() const { return store_; }
  const EncoderStack& encoder() const { return encoder_; }
  const std::vector<DiffPoolBlock>& blocks() const { return blocks_; }
  const Discriminator& discriminator() const { return discriminator_; }

 private:
  void check_input(const GraphTensors& g) const;

  ModelConfig config_;
  Eigen::Index input_dim_;
  Eigen::Index max_nodes_;
  ParameterStore store_;
  EncoderStack encoder_;
  std::vector<DiffPoolBlock> blocks_;
  Discriminator discriminator_;
};

}  // namespace uhgr
