#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "egocurate/common.hpp"
#include "egocurate/pca.hpp"

namespace egocurate {

inline constexpr double kSigmaFloor = 1e-6;

enum class BandwidthMode { shared, per_point };

// Raw-space normalization baked into a model: z-scoring and/or a PCA basis.
// Queries arrive in raw space and are mapped before kernel evaluation, so a
// model fitted on one set projects any other set consistently.
struct Pretransform {
  std::vector<double> mean;            // d_raw
  std::vector<double> scale;           // d_raw, all > 0
  std::optional<Matrix> components;    // d_model x d_raw when PCA is applied

  std::size_t in_dim() const { return mean.size(); }
  std::vector<double> apply(const double* x, std::size_t len) const;
};

// Uniform mixture of diagonal Gaussians centered at the stored points.
// Shared mode: one bandwidth per dimension (Silverman). Per-point mode:
// 1-D with one bandwidth per kernel (blurriness).
struct DensityModel {
  BandwidthMode mode = BandwidthMode::shared;
  Matrix points;                    // n x d, model space
  std::vector<double> bandwidths;   // d (shared) or n (per_point)
  std::optional<Pretransform> pretransform;
  std::vector<std::string> warnings;

  std::size_t size() const { return points.rows; }
  std::size_t dim() const { return points.cols; }
  std::size_t raw_dim() const {
    return pretransform ? pretransform->in_dim() : points.cols;
  }
};

// Silverman plug-in: h_i = sigma_i * (4 / ((d+2) n))^(1/(d+4)), population
// sigma. Dimensions with sigma below the floor get h_i = floor and a warning.
DensityModel fit(const Matrix& points);

// 1-D per-point model: representation = per-video blur mean, bandwidth = its
// frame-level std (floored).
DensityModel fit_blurriness(const std::vector<double>& means,
                            const std::vector<double>& stds);

// log of (1/n) sum_j prod_i N(x_i; p_ji, h_i^2), computed by log-sum-exp.
// x is raw-space when the model carries a pretransform.
double log_density(const DensityModel& model, const double* x, std::size_t len);
double log_density(const DensityModel& model, const std::vector<double>& x);

// One value per row of xs; parallel over rows, slot-ordered.
std::vector<double> log_densities(const DensityModel& model, const Matrix& xs);

// Leave-one-out log density at every stored point (kernel j excluded at
// point j, mixture renormalized to n-1).
std::vector<double> loo_log_densities(const DensityModel& model);

// Sum over rows of log_density: the log of Sim(A,B)'s product. Empty B -> 0.
double ego_similarity(const DensityModel& model_a, const Matrix& set_b);

void save_model(const DensityModel& model, const std::filesystem::path& path);
DensityModel load_model(const std::filesystem::path& path);

// Plain B x d feature blob sharing the model conventions (magic, version,
// little-endian 64-bit reals).
void save_feature_matrix(const Matrix& m, const std::filesystem::path& path);
Matrix load_feature_matrix(const std::filesystem::path& path);

}  // namespace egocurate
