#include "uhgr/export.hpp"

#include <array>
#include <sstream>

#include <nlohmann/json.hpp>

namespace uhgr {

using json = nlohmann::json;

const std::string& palette_color(int cluster) {
  static const std::array<std::string, 12> kPalette = {
      "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
      "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#aec7e8", "#ffbb78"};
  const auto n = static_cast<int>(kPalette.size());
  return kPalette[static_cast<std::size_t>(((cluster % n) + n) % n)];
}

std::vector<int> hard_assignments(const Matrix& soft) {
  std::vector<int> out(static_cast<std::size_t>(soft.rows()));
  for (Eigen::Index i = 0; i < soft.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < soft.cols(); ++c) {
      if (soft(i, c) > soft(i, best)) best = c;
    }
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

HierarchyTrace trace_hierarchy(const UhgrModel& model, const Graph& graph) {
  const GraphTensors t = GraphTensors::from(graph);
  ad::Tape tape;
  UhgrModel::Forward fw = model.forward(tape, t, ForwardOptions{ad::Mode::kEval, false});
  return to_trace(fw.hierarchy);
}

HierarchyExport build_export(const HierarchyTrace& trace, const Graph& graph) {
  if (trace.levels.empty()) throw ShapeError("export: trace has no levels");
  if (static_cast<std::size_t>(trace.levels.front().assignment.rows()) != graph.num_nodes()) {
    throw ShapeError("export: trace covers " + std::to_string(trace.levels.front().assignment.rows()) +
                     " nodes, graph has " + std::to_string(graph.num_nodes()));
  }
  HierarchyExport ex;
  ex.num_nodes = graph.num_nodes();
  for (Eigen::Index r = 0; r < graph.adjacency.outerSize(); ++r) {
    for (SparseMatrix::InnerIterator it(graph.adjacency, r); it; ++it) {
      if (it.row() < it.col()) {
        ex.edges.emplace_back(static_cast<std::size_t>(it.row()), static_cast<std::size_t>(it.col()));
      }
    }
  }
  Eigen::Index below = static_cast<Eigen::Index>(graph.num_nodes());
  for (const HierarchyTrace::Level& level : trace.levels) {
    if (level.assignment.rows() != below) throw ShapeError("export: trace levels do not chain");
    HierarchyExport::Level out;
    out.clusters = level.assignment.cols();
    out.soft = level.assignment;
    out.hard = hard_assignments(level.assignment);
    ex.levels.push_back(std::move(out));
    below = level.assignment.cols();
  }
  return ex;
}

std::string to_json_text(const HierarchyExport& ex, bool include_soft) {
  json edges = json::array();
  for (const auto& [i, j] : ex.edges) edges.push_back({i, j});
  json levels = json::array();
  for (std::size_t l = 0; l < ex.levels.size(); ++l) {
    const HierarchyExport::Level& level = ex.levels[l];
    json membership = json::array();
    for (std::size_t i = 0; i < level.hard.size(); ++i) membership.push_back({i, level.hard[i]});
    json item{{"level", l + 1},
              {"items", level.hard.size()},
              {"clusters", level.clusters},
              {"hard", level.hard},
              {"membership_edges", std::move(membership)}};
    if (include_soft) {
      json soft = json::array();
      for (Eigen::Index i = 0; i < level.soft.rows(); ++i) {
        std::vector<double> row(level.soft.row(i).data(), level.soft.row(i).data() + level.soft.cols());
        soft.push_back(std::move(row));
      }
      item["soft"] = std::move(soft);
    }
    levels.push_back(std::move(item));
  }
  json doc{{"num_nodes", ex.num_nodes},
           {"edges", std::move(edges)},
           {"tie_break", "lowest_index"},
           {"levels", std::move(levels)}};
  return doc.dump(1) + "\n";
}

std::string to_dot(const HierarchyExport& ex) {
  if (ex.levels.empty()) throw ShapeError("export: no levels");
  const HierarchyExport::Level& first = ex.levels.front();
  std::ostringstream out;
  out << "graph {\n  node [style=filled];\n";
  for (std::size_t i = 0; i < ex.num_nodes; ++i) {
    out << "  " << i << " [fillcolor=\"" << palette_color(first.hard[i]) << "\"];\n";
  }
  for (Eigen::Index c = 0; c < first.clusters; ++c) {
    out << "  cluster_" << c << " [shape=box, fillcolor=\"" << palette_color(static_cast<int>(c))
        << "\"];\n";
  }
  for (const auto& [i, j] : ex.edges) out << "  " << i << " -- " << j << ";\n";
  for (std::size_t i = 0; i < ex.num_nodes; ++i) {
    out << "  " << i << " -- cluster_" << first.hard[i] << " [style=dashed];\n";
  }
  out << "}\n";
  return out.str();
}

std::string export_hierarchy(const HierarchyTrace& trace, const Graph& graph, const std::string& format) {
  const HierarchyExport ex = build_export(trace, graph);
  if (format == "json") return to_json_text(ex);
  if (format == "dot") return to_dot(ex);
  throw ConfigError("export: unknown format '" + format + "' (expected json or dot)");
}

}  // namespace uhgr
