#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "egocurate/jsonl.hpp"

namespace egocurate {

std::string file_digest(const std::filesystem::path& path);

// One record per run, written beside the outputs. Configuration covers every
// value that can change results; execution-only knobs (worker count, log
// level) stay out so reruns at different parallelism are byte-identical.
struct Provenance {
  std::string command;
  json config = json::object();
  std::vector<std::pair<std::string, std::string>> inputs;  // path, digest
  std::vector<std::string> notes;

  void add_input(const std::filesystem::path& path);
  void write(const std::filesystem::path& path) const;
};

// "<output>.provenance.json" for files, "<output>/provenance.json" for dirs.
std::filesystem::path provenance_path_for(const std::filesystem::path& output);

}  // namespace egocurate
