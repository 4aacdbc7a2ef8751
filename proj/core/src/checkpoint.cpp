#include "seedcl/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "seedcl/error.hpp"

namespace seedcl {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void write_checkpoint(const fs::path& dir, const ParamStore<float>& params, const CheckpointMeta& meta) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoFailure("cannot create checkpoint directory " + dir.string() + ": " + ec.message());

  ordered_json index = ordered_json::object();
  std::size_t offset = 0;
  for (const auto& e : params.entries()) {
    ordered_json item;
    item["shape"] = e.shape;
    item["dtype"] = "float32";
    item["byte_offset"] = offset;
    item["frozen"] = !e.trainable;
    index[e.name] = item;
    offset += e.size() * sizeof(float);
  }
  ordered_json j;
  j["framework"] = meta.framework;
  j["config"] = meta.config;
  j["epoch"] = meta.epoch;
  j["extra"] = meta.extra;
  j["index"] = index;

  std::ofstream m(dir / "meta.json", std::ios::binary);
  if (!m) throw IoFailure("cannot write " + (dir / "meta.json").string());
  m << j.dump(2) << '\n';

  std::ofstream p(dir / "params.bin", std::ios::binary);
  if (!p) throw IoFailure("cannot write " + (dir / "params.bin").string());
  for (const auto& e : params.entries())
    p.write(reinterpret_cast<const char*>(e.values.data()), static_cast<std::streamsize>(e.size() * sizeof(float)));
  if (!m || !p) throw IoFailure("failed writing checkpoint " + dir.string());
}

Checkpoint read_checkpoint(const fs::path& dir) {
  std::ifstream m(dir / "meta.json");
  if (!m) throw IoFailure("cannot open " + (dir / "meta.json").string());
  ordered_json j;
  try {
    j = ordered_json::parse(m);
  } catch (const ordered_json::exception& e) {
    throw IoFailure("malformed " + (dir / "meta.json").string() + ": " + e.what());
  }
  std::ifstream p(dir / "params.bin", std::ios::binary);
  if (!p) throw IoFailure("cannot open " + (dir / "params.bin").string());
  const std::vector<char> blob((std::istreambuf_iterator<char>(p)), std::istreambuf_iterator<char>());

  Checkpoint ck;
  try {
    ck.meta.framework = j.at("framework").get<std::string>();
    ck.meta.config = j.at("config");
    ck.meta.epoch = j.at("epoch").get<int>();
    ck.meta.extra = j.value("extra", ordered_json::object());
    for (const auto& [name, item] : j.at("index").items()) {
      if (item.at("dtype").get<std::string>() != "float32")
        throw IoFailure("parameter " + name + " has unsupported dtype");
      ParamEntry<float> e;
      e.name = name;
      e.shape = item.at("shape").get<std::vector<int>>();
      e.trainable = !item.at("frozen").get<bool>();
      e.values.resize(shape_size(e.shape));
      const auto offset = item.at("byte_offset").get<std::size_t>();
      const std::size_t bytes = e.values.size() * sizeof(float);
      if (offset + bytes > blob.size()) throw IoFailure("params.bin is too short for " + name);
      std::memcpy(e.values.data(), blob.data() + offset, bytes);
      ck.params.push(std::move(e));
    }
  } catch (const ordered_json::exception& e) {
    throw IoFailure("malformed " + (dir / "meta.json").string() + ": " + e.what());
  }
  return ck;
}

}  // namespace seedcl
