#include "egocurate/provenance.hpp"

#include <fstream>

#include "egocurate/common.hpp"

namespace egocurate {

std::string file_digest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in.good()) throw IoError("cannot open " + path.string());
  // FNV-1a, 64-bit; cheap and stable, good enough to fingerprint inputs.
  std::uint64_t hash = 1469598103934665603ull;
  char buf[65536];
  while (in) {
    in.read(buf, sizeof(buf));
    const std::streamsize got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      hash ^= static_cast<unsigned char>(buf[i]);
      hash *= 1099511628211ull;
    }
  }
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(hash));
  return std::string("fnv1a64:") + hex;
}

void Provenance::add_input(const std::filesystem::path& path) {
  inputs.emplace_back(path.generic_string(), file_digest(path));
}

void Provenance::write(const std::filesystem::path& path) const {
  json obj;
  obj["tool"] = "egocurate";
  obj["version"] = kToolVersion;
  obj["command"] = command;
  obj["config"] = config;
  json in = json::object();
  for (const auto& [p, digest] : inputs) in[p] = digest;
  obj["inputs"] = in;
  if (!notes.empty()) obj["notes"] = notes;
  std::ofstream out(path);
  if (!out.good()) throw IoError("cannot write " + path.string());
  out << obj.dump(2) << '\n';
  out.close();
  if (out.fail()) throw IoError("write failed for " + path.string());
}

std::filesystem::path provenance_path_for(const std::filesystem::path& output) {
  if (std::filesystem::is_directory(output)) return output / "provenance.json";
  std::filesystem::path p = output;
  p += ".provenance.json";
  return p;
}

}  // namespace egocurate
