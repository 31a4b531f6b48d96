#include "uhgr/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include <nlohmann/json.hpp>

namespace uhgr {

using json = nlohmann::json;
namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little, "checkpoint payload assumes little-endian");

namespace {

constexpr char kMagic[8] = {'U', 'H', 'G', 'R', 'C', 'K', 'P', 'T'};

template <class T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <class T>
T take(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw IntegrityError("checkpoint truncated");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

std::string serialize_checkpoint(const ModelState& state) {
  if (!state.model) throw ConfigError("checkpoint: state has no model");
  const UhgrModel& model = *state.model;
  json params = json::array();
  for (const Parameter& p : model.params()) {
    params.push_back({{"name", p.name},
                      {"rows", p.value.rows()},
                      {"cols", p.value.cols()},
                      {"trainable", p.trainable}});
  }
  json header{{"config", model.config().to_json()},
              {"config_hash", hex64(model.config().hash())},
              {"seed", model.config().seed},
              {"epoch", state.epoch},
              {"best_loss", std::isfinite(state.best_loss) ? json(state.best_loss) : json(nullptr)},
              {"input_dim", model.input_dim()},
              {"max_nodes", model.max_nodes()},
              {"params", std::move(params)}};
  const std::string header_text = header.dump();

  std::string out(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, header_text.size());
  out += header_text;
  for (const Parameter& p : model.params()) {
    out.append(reinterpret_cast<const char*>(p.value.data()),
               static_cast<std::size_t>(p.value.size()) * sizeof(double));
  }
  put<std::uint64_t>(out, fnv1a(out.data(), out.size()));
  return out;
}

ModelState deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof kMagic + 4 + 8 + 8) throw IntegrityError("checkpoint truncated");
  if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw IntegrityError("not a checkpoint file (bad magic)");
  }
  const std::size_t body = bytes.size() - sizeof(std::uint64_t);
  std::size_t tail = body;
  const auto stored = take<std::uint64_t>(bytes, tail);
  if (stored != fnv1a(bytes.data(), body)) throw IntegrityError("checkpoint checksum mismatch");

  std::size_t pos = sizeof kMagic;
  const auto version = take<std::uint32_t>(bytes, pos);
  if (version != kCheckpointVersion) {
    throw IntegrityError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto header_len = take<std::uint64_t>(bytes, pos);
  if (header_len > body - pos) throw IntegrityError("checkpoint header overruns file");
  json header;
  try {
    header = json::parse(bytes.substr(pos, header_len));
  } catch (const json::exception& e) {
    throw IntegrityError(std::string("checkpoint header: ") + e.what());
  }
  pos += header_len;

  ModelState state;
  try {
    const ModelConfig config = ModelConfig::from_json(header.at("config"));
    if (header.at("config_hash").get<std::string>() != hex64(config.hash())) {
      throw IntegrityError("checkpoint config hash mismatch");
    }
    state.model = std::make_unique<UhgrModel>(config, header.at("input_dim").get<Eigen::Index>(),
                                              header.at("max_nodes").get<Eigen::Index>());
    state.epoch = header.at("epoch").get<int>();
    state.best_loss = header.at("best_loss").is_null() ? std::numeric_limits<double>::infinity()
                                                       : header.at("best_loss").get<double>();
    const json& params = header.at("params");
    if (params.size() != state.model->params().size()) {
      throw IntegrityError("checkpoint parameter count does not match the configured model");
    }
    std::size_t i = 0;
    for (Parameter* p : state.model->params().all()) {
      const json& meta = params[i++];
      if (meta.at("name").get<std::string>() != p->name ||
          meta.at("rows").get<Eigen::Index>() != p->value.rows() ||
          meta.at("cols").get<Eigen::Index>() != p->value.cols()) {
        throw IntegrityError("checkpoint parameter " + meta.at("name").get<std::string>() +
                             " does not match the configured model");
      }
      const std::size_t nbytes = static_cast<std::size_t>(p->value.size()) * sizeof(double);
      if (pos + nbytes > body) throw IntegrityError("checkpoint payload truncated");
      std::memcpy(p->value.data(), bytes.data() + pos, nbytes);
      pos += nbytes;
    }
  } catch (const json::exception& e) {
    throw IntegrityError(std::string("checkpoint header: ") + e.what());
  } catch (const ConfigError& e) {
    throw IntegrityError(std::string("checkpoint config: ") + e.what());
  }
  if (pos != body) throw IntegrityError("checkpoint has trailing bytes");
  return state;
}

void save_checkpoint(const ModelState& state, const std::string& path) {
  write_file_atomic(path, serialize_checkpoint(state));
}

ModelState load_checkpoint(const std::string& path) { return deserialize_checkpoint(read_file(path)); }

void write_file_atomic(const std::string& path, const std::string& bytes) {
  const fs::path target(path);
  fs::path tmp = target;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      out.close();
      fs::remove(tmp);
      throw IoError("write failed for " + tmp.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp);
    throw IoError("cannot move output into place at " + path + ": " + ec.message());
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace uhgr
