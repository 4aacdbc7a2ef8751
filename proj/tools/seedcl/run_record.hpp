#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

namespace seedcl::cli {

// One line appended to <out>/run_records.jsonl per invocation, success or not.
class RunRecord {
 public:
  explicit RunRecord(std::string command);

  void set_out_dir(std::filesystem::path dir) { out_dir_ = std::move(dir); }
  const std::filesystem::path& out_dir() const noexcept { return out_dir_; }

  void set_config(nlohmann::ordered_json config) { config_ = std::move(config); }
  // Verbatim text of the config file the run was started from.
  void set_config_text(std::string text) { config_text_ = std::move(text); }
  void set_checkpoint(const std::filesystem::path& p) { checkpoint_ = p.string(); }
  void add_artifact(const std::filesystem::path& p) { artifacts_.push_back(p.string()); }
  nlohmann::ordered_json& metrics() { return metrics_; }

  // Appends the record; failures to write are reported on stderr only.
  void finish(int exit_code, const std::string& error = {});

 private:
  std::string command_;
  std::string started_at_;
  std::filesystem::path out_dir_;
  nlohmann::ordered_json config_;
  std::string config_text_;
  std::string checkpoint_;
  std::vector<std::string> artifacts_;
  nlohmann::ordered_json metrics_ = nlohmann::ordered_json::object();
};

std::string utc_timestamp();

}  // namespace seedcl::cli
