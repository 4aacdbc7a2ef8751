#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace seedcl {

enum class Split { train, val, test };

std::string_view to_string(Split s) noexcept;
/// Throws ConfigError on anything but train|val|test.
Split parse_split(std::string_view s);

struct ManifestRecord {
  std::string path;  // relative to the manifest's directory
  std::string class_label;
  Split split = Split::train;

  friend bool operator==(const ManifestRecord&, const ManifestRecord&) = default;
};

/// Train/val/test membership of a generated dataset.
struct DatasetManifest {
  std::vector<ManifestRecord> records;
  std::vector<std::string> class_names;
  std::uint64_t master_seed = 0;

  /// -1 when the label is not a class of this manifest.
  int class_index(std::string_view label) const;
  std::size_t count(std::string_view label, Split split) const;
  std::size_t count(Split split) const;
  std::vector<ManifestRecord> select(Split split) const;

  /// Unique paths, known labels. Throws ConfigError describing the first
  /// violation.
  void validate() const;

  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

/// JSON Lines: a header {"classes": [...], "master_seed": N} then one
/// {"path", "class", "split"} object per record.
void write_manifest(const std::filesystem::path& file, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::filesystem::path& file);

}  // namespace seedcl
