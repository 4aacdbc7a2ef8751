#include "run_record.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <iostream>

namespace seedcl::cli {

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

RunRecord::RunRecord(std::string command) : command_(std::move(command)), started_at_(utc_timestamp()) {}

void RunRecord::finish(int exit_code, const std::string& error) {
  if (out_dir_.empty()) return;
  nlohmann::ordered_json j;
  j["command"] = command_;
  j["started_at"] = started_at_;
  j["finished_at"] = utc_timestamp();
  j["exit_code"] = exit_code;
  j["status"] = exit_code == 0 ? "ok" : "error";
  if (!error.empty()) j["error"] = error;
  j["config"] = config_;
  if (!config_text_.empty()) j["config_file_text"] = config_text_;
  if (!checkpoint_.empty()) j["checkpoint"] = checkpoint_;
  j["artifacts"] = artifacts_;
  j["metrics"] = metrics_;
  std::error_code ec;
  std::filesystem::create_directories(out_dir_, ec);
  std::ofstream out(out_dir_ / "run_records.jsonl", std::ios::app);
  if (!out) {
    std::cerr << "warning: cannot append run record in " << out_dir_.string() << "\n";
    return;
  }
  out << j.dump() << "\n";
}

}  // namespace seedcl::cli
