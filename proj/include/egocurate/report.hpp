#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "egocurate/kde.hpp"
#include "egocurate/props.hpp"
#include "egocurate/select.hpp"

namespace egocurate {

// Writes the SVG plus a numeric CSV twin next to it (same stem, .csv).
// Tests and downstream tooling read the CSV; the SVG is for eyes only.
void emit_polar_histogram(const CameraMotionSummary& summary,
                          const std::filesystem::path& svg_path);

void emit_heatmap(const std::array<int, kHeatmapGrid * kHeatmapGrid>& heatmap,
                  const std::filesystem::path& svg_path);

struct SimilarityInput {
  std::vector<std::string> names;
  // Per weighted property: one model and one raw representation matrix per
  // dataset, in `names` order. Models must share a representation space.
  std::map<Property, std::vector<DensityModel>> models;
  std::map<Property, std::vector<Matrix>> reps;
};

struct SimilarityOutput {
  std::vector<std::string> names;
  std::map<Property, Matrix> raw;      // log Sim(A,B), rows = model set A
  std::map<Property, Matrix> zscored;  // raw z-scored across the matrix
  Matrix unified;                      // weighted sum of z-scored matrices
  std::vector<int> most_similar;       // per row: most similar other dataset
};

SimilarityOutput compute_similarity_matrix(
    const SimilarityInput& input, const std::array<double, kPropertyCount>& weights);

void emit_similarity_matrix(const SimilarityOutput& sim,
                            const std::filesystem::path& dir);

// 2-component PCA scatter with an optional highlight layer; the CSV twin
// carries the projected coordinates and a hull-area sidecar reports the
// covered region.
void emit_pca_scatter(const std::vector<PropertySet>& table, Property property,
                      const std::vector<std::string>& highlight_ids,
                      const std::filesystem::path& svg_path);

struct ReportOptions {
  std::array<double, kPropertyCount> weights = kDefaultWeights;
  std::vector<std::string> highlight_ids;
};

struct DatasetReportInput {
  std::string name;
  std::vector<PropertySet> props;
};

// Full report tree: polar/, heatmap/, blur/, pose/, similarity/, pca/ under
// out_dir, plus a manifest.txt of every emitted file (written last). Returns
// the emitted relative paths in manifest order.
std::vector<std::string> emit_report(const std::vector<DatasetReportInput>& datasets,
                                     const ReportOptions& options,
                                     const std::filesystem::path& out_dir);

}  // namespace egocurate
