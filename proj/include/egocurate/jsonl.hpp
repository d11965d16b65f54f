#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <string>

#include "egocurate/common.hpp"
#include "json.hpp"

namespace egocurate {

using json = nlohmann::ordered_json;

// Calls fn(line_number, object) for each non-empty line. Line numbers are
// 1-based so error messages point at the offending line.
inline void for_each_jsonl(const std::filesystem::path& path,
                           const std::function<void(std::size_t, const json&)>& fn) {
  std::ifstream in(path);
  if (!in.good()) throw IoError("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                            ": parse failure: " + e.what());
    }
    fn(line_no, obj);
  }
}

class JsonlWriter {
public:
  explicit JsonlWriter(const std::filesystem::path& path) : out_(path), path_(path) {
    if (!out_.good()) throw IoError("cannot write " + path.string());
  }
  void write(const json& obj) { out_ << obj.dump() << '\n'; }
  void close() {
    out_.close();
    if (out_.fail()) throw IoError("write failed for " + path_.string());
  }

private:
  std::ofstream out_;
  std::filesystem::path path_;
};

inline std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in.good()) throw IoError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

inline void write_file_bytes(const std::filesystem::path& path,
                             const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out.good()) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.close();
  if (out.fail()) throw IoError("write failed for " + path.string());
}

}  // namespace egocurate
