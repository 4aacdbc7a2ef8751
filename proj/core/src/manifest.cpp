#include "seedcl/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <nlohmann/json.hpp>
#include <unordered_set>

#include "seedcl/error.hpp"

namespace seedcl {

using nlohmann::json;

std::string_view to_string(Split s) noexcept {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw ConfigError("unknown split '" + std::string(s) + "' (expected train|val|test)");
}

int DatasetManifest::class_index(std::string_view label) const {
  const auto it = std::find(class_names.begin(), class_names.end(), label);
  return it == class_names.end() ? -1 : static_cast<int>(it - class_names.begin());
}

std::size_t DatasetManifest::count(std::string_view label, Split split) const {
  return static_cast<std::size_t>(std::count_if(records.begin(), records.end(), [&](const ManifestRecord& r) {
    return r.split == split && r.class_label == label;
  }));
}

std::size_t DatasetManifest::count(Split split) const {
  return static_cast<std::size_t>(
      std::count_if(records.begin(), records.end(), [&](const ManifestRecord& r) { return r.split == split; }));
}

std::vector<ManifestRecord> DatasetManifest::select(Split split) const {
  std::vector<ManifestRecord> out;
  std::copy_if(records.begin(), records.end(), std::back_inserter(out),
               [&](const ManifestRecord& r) { return r.split == split; });
  return out;
}

void DatasetManifest::validate() const {
  std::unordered_set<std::string> seen;
  for (const auto& r : records) {
    if (!seen.insert(r.path).second) throw ConfigError("duplicate manifest path " + r.path);
    if (class_index(r.class_label) < 0) throw ConfigError("manifest record has unknown class " + r.class_label);
  }
}

void write_manifest(const std::filesystem::path& file, const DatasetManifest& manifest) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoFailure("cannot write manifest " + file.string());
  json header = json::object();
  header["classes"] = manifest.class_names;
  header["master_seed"] = manifest.master_seed;
  out << header.dump() << '\n';
  for (const auto& r : manifest.records) {
    nlohmann::ordered_json line;
    line["path"] = r.path;
    line["class"] = r.class_label;
    line["split"] = std::string(to_string(r.split));
    out << line.dump() << '\n';
  }
  if (!out) throw IoFailure("failed writing manifest " + file.string());
}

DatasetManifest read_manifest(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoFailure("cannot open manifest " + file.string());
  DatasetManifest m;
  std::string line;
  bool have_header = false;
  std::size_t lineno = 0;
  try {
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      const json j = json::parse(line);
      if (!have_header) {
        m.class_names = j.at("classes").get<std::vector<std::string>>();
        m.master_seed = j.at("master_seed").get<std::uint64_t>();
        have_header = true;
        continue;
      }
      m.records.push_back(ManifestRecord{j.at("path").get<std::string>(), j.at("class").get<std::string>(),
                                         parse_split(j.at("split").get<std::string>())});
    }
  } catch (const json::exception& e) {
    throw ConfigError(file.string() + ":" + std::to_string(lineno) + ": " + e.what());
  }
  if (!have_header) throw ConfigError("manifest " + file.string() + " has no header line");
  m.validate();
  return m;
}

}  // namespace seedcl
