#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "egocurate/common.hpp"

namespace egocurate {

enum class Split { train, val, test };

std::string to_string(Split s);
Split split_from_string(const std::string& s);

struct VideoRecord {
  std::string id;
  std::string source;
  Split split = Split::train;
  std::string label_text;
  int label_id = -1;
  std::optional<std::string> frames_path;
  double fps_native = 0.0;
};

struct ClassEntry {
  int label_id = -1;
  std::string canonical_text;
  std::vector<std::string> member_texts;
  std::vector<double> semantic_vector;
};

struct ClassTable {
  std::vector<ClassEntry> entries;
};

struct Provenance;

struct Manifest {
  std::vector<VideoRecord> records;
  ClassTable classes;

  // Throws ValidationError on duplicate ids or (when classes are present)
  // label_ids that do not resolve.
  void validate() const;
};

// Records file plus optional "<stem>.classes.jsonl" sidecar next to it.
Manifest load_manifest(const std::filesystem::path& records_path);
void write_manifest(const Manifest& m, const std::filesystem::path& records_path);

ClassTable load_classes(const std::filesystem::path& path);
void write_classes(const ClassTable& table, const std::filesystem::path& path);

std::filesystem::path classes_sidecar_path(const std::filesystem::path& records_path);

struct LabeledVector {
  std::string text;
  std::vector<double> embedding;
};

// Single-link merge of labels whose pairwise cosine similarity reaches the
// threshold. Identical texts always land in one class. Canonical text is the
// lexicographically smallest member; label_ids are dense in sorted canonical
// order, so the result is invariant to input permutation.
ClassTable merge_classes(const std::vector<LabeledVector>& labels, double threshold);

struct BalancedSample {
  std::vector<std::string> ids;
  std::vector<int> underpopulated_classes;  // classes with fewer than per_class members
};

// min(population, per_class) ids per class, uniform without replacement.
// Classes are visited in ascending label_id order and ids are sorted within a
// class first, so the draw does not depend on record order.
BalancedSample sample_class_balanced(const Manifest& manifest, int per_class,
                                     std::uint64_t seed);

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace egocurate
