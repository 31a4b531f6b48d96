#include "uhgr/datasets.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>

#include <nlohmann/json.hpp>

namespace uhgr {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::string upper(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::toupper(c); });
  return s;
}

LoadedData from_citation(const fs::path& content, const std::string& name) {
  fs::path cites = content;
  cites.replace_extension(".cites");
  if (!fs::exists(cites)) throw IoError("missing citation file " + cites.string());
  CitationLoadOptions opts;
  opts.skip_unknown_ids = lower(name) == "citeseer";
  LoadedData out;
  out.name = name;
  out.transductive = true;
  out.graph = load_citation_graph(content.string(), cites.string(), opts);
  return out;
}

LoadedData from_dataset(GraphDataset ds) {
  if (ds.feature_dim == 0) ds = synthesize_degree_features(ds, kDegreeFeatureCap);
  LoadedData out;
  out.name = ds.name;
  out.dataset = std::move(ds);
  return out;
}

LoadedData from_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  if (j.is_object() && j.contains("n")) {
    LoadedData out;
    out.name = path.stem().string();
    out.transductive = true;
    out.graph = graph_from_json(j);
    if (out.graph.features.cols() == 0) {
      GraphDataset wrap;
      wrap.graphs.push_back(std::move(out.graph));
      wrap = synthesize_degree_features(wrap, kDegreeFeatureCap);
      out.graph = std::move(wrap.graphs.front());
    }
    return out;
  }
  return from_dataset(dataset_from_json(j, path.stem().string()));
}

std::optional<LoadedData> from_directory(const fs::path& dir) {
  const std::string base = dir.filename().string();
  if (fs::exists(dir / (base + "_A.txt"))) return from_dataset(load_tu_dataset(dir.string(), base));
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".content") {
      return from_citation(entry.path(), entry.path().stem().string());
    }
  }
  return std::nullopt;
}

}  // namespace

std::string data_root() {
  const char* env = std::getenv("UHGR_DATA_DIR");
  return env && *env ? env : "data";
}

LoadedData load_data(const std::string& spec) {
  const fs::path path(spec);
  if (fs::exists(path)) {
    if (fs::is_directory(path)) {
      if (auto d = from_directory(path)) return std::move(*d);
      throw IoError("no recognised dataset files in " + spec);
    }
    if (path.extension() == ".json") return from_json_file(path);
    if (path.extension() == ".content") return from_citation(path, path.stem().string());
    throw IoError("unrecognised dataset file " + spec);
  }
  if (spec.find('/') != std::string::npos) throw IoError("dataset path not found: " + spec);

  const fs::path root(data_root());
  const std::string name = lower(spec);
  for (const fs::path& candidate : {root / name / (name + ".content"), root / (name + ".content")}) {
    if (fs::exists(candidate)) return from_citation(candidate, name);
  }
  for (const std::string& tu : {spec, upper(spec)}) {
    const fs::path dir = root / tu;
    if (fs::exists(dir / (tu + "_A.txt"))) return from_dataset(load_tu_dataset(dir.string(), tu));
  }
  for (const fs::path& candidate : {root / (name + ".json"), root / (spec + ".json")}) {
    if (fs::exists(candidate)) return from_json_file(candidate);
  }
  throw IoError("dataset '" + spec + "' not found under " + root.string() +
                " (set UHGR_DATA_DIR or pass a path)");
}

}  // namespace uhgr
