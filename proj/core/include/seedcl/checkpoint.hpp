#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>

#include "seedcl/params.hpp"

namespace seedcl {

struct CheckpointMeta {
  std::string framework;
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  int epoch = 0;
  nlohmann::ordered_json extra = nlohmann::ordered_json::object();
};

struct Checkpoint {
  ParamStore<float> params;
  CheckpointMeta meta;
};

/// Writes dir/meta.json (framework, config, epoch, extra, and an index of
/// name -> {shape, dtype, byte_offset, frozen}) and dir/params.bin holding
/// little-endian float32 values in index order. Output is a pure function of
/// the arguments, so write -> read -> write reproduces the bytes.
void write_checkpoint(const std::filesystem::path& dir, const ParamStore<float>& params, const CheckpointMeta& meta);
Checkpoint read_checkpoint(const std::filesystem::path& dir);

}  // namespace seedcl
