#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "uhgr/checkpoint.hpp"
#include "uhgr/datasets.hpp"
#include "uhgr/evaluator.hpp"
#include "uhgr/export.hpp"
#include "uhgr/trainer.hpp"

namespace py = pybind11;
using namespace uhgr;

namespace {

using Edge = std::pair<std::size_t, std::size_t>;

Graph make_graph(std::size_t n, const std::vector<Edge>& edges, const Matrix& features,
                 std::optional<std::vector<int>> node_labels, std::optional<int> graph_label) {
  Graph g;
  g.adjacency = adjacency_from_edges(n, edges);
  g.features = features.rows() == 0 && features.cols() == 0 ? Matrix(static_cast<Eigen::Index>(n), 0) : features;
  if (node_labels) g.node_labels = *node_labels;
  g.graph_label = graph_label;
  g.validate();
  return g;
}

std::vector<Edge> edge_list(const Graph& g) {
  std::vector<Edge> out;
  for (Eigen::Index r = 0; r < g.adjacency.outerSize(); ++r)
    for (SparseMatrix::InnerIterator it(g.adjacency, r); it; ++it)
      if (it.row() < it.col()) out.emplace_back(it.row(), it.col());
  return out;
}

py::dict log_dict(const TrainLog& log) {
  py::list epochs, losses;
  for (const EpochRecord& r : log.epochs) {
    epochs.append(r.epoch);
    losses.append(r.loss);
  }
  py::dict d;
  d["epoch"] = epochs;
  d["loss"] = losses;
  d["stopping_epoch"] = log.stopping_epoch;
  d["best_epoch"] = log.best_epoch;
  d["best_loss"] = log.best_loss;
  return d;
}

py::tuple trained(TrainResult r) {
  py::dict log = log_dict(r.log);
  return py::make_tuple(std::move(r.state), log);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Label-free hierarchical graph embeddings (C++ core)";

  auto base = py::register_exception<Error>(m, "UhgrError", PyExc_RuntimeError);
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<IntegrityError>(m, "IntegrityError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());

  py::class_<ModelConfig>(m, "Config")
      .def(py::init<>())
      .def_static("parse", py::overload_cast<const std::string&>(&ModelConfig::parse))
      .def_static("load", py::overload_cast<const std::string&>(&ModelConfig::load))
      .def("set", &ModelConfig::set)
      .def("validate", &ModelConfig::validate)
      .def("to_text", &ModelConfig::to_text)
      .def("hash", &ModelConfig::hash)
      .def_readwrite("encoder", &ModelConfig::encoder_type)
      .def_readwrite("heads", &ModelConfig::heads)
      .def_readwrite("hidden_dim", &ModelConfig::hidden_dim)
      .def_readwrite("embed_dim", &ModelConfig::embed_dim)
      .def_readwrite("encoder_layers", &ModelConfig::encoder_layers)
      .def_readwrite("pool_ratios", &ModelConfig::pool_ratios)
      .def_readwrite("interlevel_gcn_layers", &ModelConfig::interlevel_gcn_layers)
      .def_readwrite("lr", &ModelConfig::lr)
      .def_readwrite("weight_decay", &ModelConfig::weight_decay)
      .def_readwrite("max_epochs", &ModelConfig::max_epochs)
      .def_readwrite("patience", &ModelConfig::patience)
      .def_readwrite("seed", &ModelConfig::seed)
      .def_readwrite("aux_losses", &ModelConfig::aux_losses)
      .def_readwrite("max_clusters", &ModelConfig::max_clusters)
      .def_readwrite("min_delta", &ModelConfig::min_delta)
      .def_readwrite("batch_norm", &ModelConfig::batch_norm)
      .def("__repr__", [](const ModelConfig& c) { return "Config(" + hex64(c.hash()) + ")"; });

  py::class_<Graph>(m, "Graph")
      .def(py::init(&make_graph), py::arg("n"), py::arg("edges"), py::arg("features") = Matrix(),
           py::arg("node_labels") = py::none(), py::arg("graph_label") = py::none())
      .def_property_readonly("num_nodes", &Graph::num_nodes)
      .def_property_readonly("num_edges", &Graph::num_edges)
      .def_property_readonly("edges", &edge_list)
      .def_property_readonly("adjacency", [](const Graph& g) { return Matrix(g.adjacency); })
      .def_readonly("features", &Graph::features)
      .def_readonly("node_labels", &Graph::node_labels)
      .def_readonly("graph_label", &Graph::graph_label);

  py::class_<GraphDataset>(m, "Dataset")
      .def(py::init([](std::vector<Graph> graphs, std::string name) {
             GraphDataset d;
             d.name = std::move(name);
             int top = -1;
             for (const Graph& g : graphs) top = std::max(top, g.graph_label.value_or(-1));
             d.graphs = std::move(graphs);
             d.num_classes = top + 1;
             d.feature_dim = d.graphs.empty() ? 0 : d.graphs.front().feature_dim();
             d.validate();
             return d;
           }),
           py::arg("graphs"), py::arg("name") = "dataset")
      .def_readonly("name", &GraphDataset::name)
      .def_readonly("num_classes", &GraphDataset::num_classes)
      .def_readonly("graphs", &GraphDataset::graphs)
      .def("labels", &GraphDataset::labels)
      .def("__len__", &GraphDataset::size);

  m.def("load_data", [](const std::string& spec) -> py::object {
    LoadedData d = load_data(spec);
    if (d.transductive) return py::cast(std::move(d.graph));
    return py::cast(std::move(d.dataset));
  });
  m.def("normalize_adjacency", py::overload_cast<const Matrix&>(&normalize_adjacency));

  py::class_<SplitSpec>(m, "Split")
      .def_readonly("train", &SplitSpec::train)
      .def_readonly("val", &SplitSpec::val)
      .def_readonly("test", &SplitSpec::test);
  m.def(
      "node_splits",
      [](const Graph& g, std::uint64_t seed, const std::string& scheme, std::size_t per_class_train) {
        NodeSplitOptions o;
        o.per_class_train = per_class_train;
        return build_node_splits(g, seed, scheme, o);
      },
      py::arg("graph"), py::arg("seed"), py::arg("scheme") = "planetoid", py::arg("per_class_train") = 20);
  m.def("folds", &build_folds, py::arg("dataset"), py::arg("k") = 10, py::arg("seed") = 0);

  py::class_<ModelState>(m, "Model")
      .def_static("load", &load_checkpoint)
      .def("save", &save_checkpoint)
      .def_property_readonly("config", [](const ModelState& s) { return s.model->config(); })
      .def_readonly("epoch", &ModelState::epoch)
      .def_readonly("best_loss", &ModelState::best_loss)
      .def(
          "embed",
          [](const ModelState& s, const Graph& g) {
            EmbeddingSet e = extract_node_embeddings(*s.model, g);
            return py::make_tuple(e.node_embeddings, e.graph_summaries);
          },
          "(node embeddings, 1-row graph summary) in eval mode")
      .def("summaries",
           [](const ModelState& s, const GraphDataset& d) {
             return extract_graph_summaries(*s.model, d).graph_summaries;
           })
      .def(
          "export",
          [](const ModelState& s, const Graph& g, const std::string& format) {
            return export_hierarchy(trace_hierarchy(*s.model, g), g, format);
          },
          py::arg("graph"), py::arg("format") = "json")
      .def("assignments", [](const ModelState& s, const Graph& g) {
        std::vector<Matrix> out;
        for (const auto& level : trace_hierarchy(*s.model, g).levels) out.push_back(level.assignment);
        return out;
      });

  m.def(
      "train",
      [](const ModelConfig& c, const Graph& g) { return trained(train_unsupervised(c, g)); },
      py::arg("config"), py::arg("graph"), "Train on one graph; returns (model, log)");
  m.def(
      "train",
      [](const ModelConfig& c, const GraphDataset& d) { return trained(train_unsupervised(c, d)); },
      py::arg("config"), py::arg("dataset"), "Train on a graph collection; returns (model, log)");

  py::class_<ProbeOptions>(m, "ProbeOptions")
      .def(py::init<>())
      .def_readwrite("l2", &ProbeOptions::l2)
      .def_readwrite("max_iterations", &ProbeOptions::max_iterations)
      .def_readwrite("grad_tol", &ProbeOptions::grad_tol);

  py::class_<LinearProbe>(m, "LinearProbe")
      .def_static("fit", &LinearProbe::fit, py::arg("x"), py::arg("labels"), py::arg("train"),
                  py::arg("num_classes"), py::arg("seed") = 0, py::arg("options") = ProbeOptions{})
      .def_readonly("weight", &LinearProbe::weight)
      .def_readonly("bias", &LinearProbe::bias)
      .def_readonly("iterations", &LinearProbe::iterations)
      .def("predict", &LinearProbe::predict)
      .def("accuracy", &LinearProbe::accuracy);
}
