#pragma once

// Binary checkpoint: "UHGRCKPT", u32 version, u64 header length, JSON header,
// little-endian doubles for every parameter in registration order, u64
// FNV-1a checksum over everything before it.

#include <cstdint>
#include <limits>
#include <memory>
#include <string>

#include "uhgr/model.hpp"

namespace uhgr {

struct ModelState {
  std::unique_ptr<UhgrModel> model;
  int epoch = 0;
  double best_loss = std::numeric_limits<double>::infinity();
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string serialize_checkpoint(const ModelState& state);
ModelState deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const ModelState& state, const std::string& path);
// IoError when the file cannot be opened, IntegrityError when it is
// truncated, corrupt or inconsistent with its header.
ModelState load_checkpoint(const std::string& path);

// Writes via a sibling temporary file and rename, so `path` is either the
// old content or the complete new content.
void write_file_atomic(const std::string& path, const std::string& bytes);
std::string read_file(const std::string& path);

}  // namespace uhgr
