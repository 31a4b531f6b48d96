#pragma once

// Hierarchy export for external renderers: per-level soft and hard cluster
// assignments as JSON, or the input graph as DOT coloured by first-level
// cluster with dashed membership edges.

#include <string>
#include <utility>
#include <vector>

#include "uhgr/diffpool.hpp"
#include "uhgr/graph.hpp"
#include "uhgr/model.hpp"

namespace uhgr {

struct HierarchyExport {
  struct Level {
    Eigen::Index clusters = 0;
    Matrix soft;             // rows: items of the level below, cols: clusters
    std::vector<int> hard;   // argmax per row, lowest index on ties
  };
  std::size_t num_nodes = 0;
  std::vector<std::pair<std::size_t, std::size_t>> edges;  // i < j
  std::vector<Level> levels;
};

// Argmax of every row; ties go to the lowest column.
std::vector<int> hard_assignments(const Matrix& soft);

// Eval-mode hierarchy of one graph.
HierarchyTrace trace_hierarchy(const UhgrModel& model, const Graph& graph);

// Rejects a trace whose level-0 node count differs from the graph's.
HierarchyExport build_export(const HierarchyTrace& trace, const Graph& graph);

std::string to_json_text(const HierarchyExport& ex, bool include_soft = true);
std::string to_dot(const HierarchyExport& ex);

// format: "json" | "dot"
std::string export_hierarchy(const HierarchyTrace& trace, const Graph& graph, const std::string& format);

// Fill colour for a cluster id; the palette repeats past its length.
const std::string& palette_color(int cluster);

}  // namespace uhgr
