#pragma once

// Resolves a `--dataset` argument (a known name or a filesystem path) to
// loaded data.

#include <string>

#include "uhgr/graph.hpp"

namespace uhgr {

struct LoadedData {
  std::string name;
  bool transductive = false;  // single graph with node labels
  Graph graph;                // set when transductive
  GraphDataset dataset;       // set otherwise
};

// Degree one-hot width used when a collection carries no node features.
inline constexpr int kDegreeFeatureCap = 64;

// Names resolve under $UHGR_DATA_DIR (default ./data):
//   cora, citeseer, pubmed -> <dir>/<name>/<name>.content + .cites (or <dir>/<name>.content)
//   anything else          -> TU layout <dir>/<NAME>/<NAME>_A.txt
// A path may be a TU directory, a directory holding one .content/.cites
// pair, a .content file, or a .json file (a graph object is transductive,
// a dataset object or array is inductive). IoError when nothing matches.
LoadedData load_data(const std::string& spec);

std::string data_root();

}  // namespace uhgr
