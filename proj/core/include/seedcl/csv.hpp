#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "seedcl/error.hpp"

namespace seedcl {

/// Shortest "%.9g" text of a value; enough to round-trip a float.
inline std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

/// Output file that throws IoFailure on open or write errors.
class TextFile {
 public:
  explicit TextFile(const std::filesystem::path& path) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw IoFailure("cannot open " + path.string() + " for writing");
  }
  TextFile& operator<<(const std::string& s) {
    out_ << s;
    return *this;
  }
  void close() {
    out_.close();
    if (!out_) throw IoFailure("failed writing " + path_.string());
  }
  ~TextFile() {
    if (out_.is_open()) out_.close();
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

}  // namespace seedcl
