#pragma once

#include <vector>

#include "egocurate/common.hpp"

namespace egocurate {

// Principal components of a point cloud. Rows of `components` are orthonormal
// axes sorted by descending eigenvalue, sign-fixed so the entry of largest
// magnitude is positive (keeps emitted files stable across runs).
struct Pca {
  std::vector<double> mean;        // input-space centering
  Matrix components;               // n_components x d_in
  std::vector<double> eigenvalues; // population covariance eigenvalues, descending

  std::size_t in_dim() const { return mean.size(); }
  std::size_t out_dim() const { return components.rows; }
};

Pca fit_pca(const Matrix& data, std::size_t max_components);

std::vector<double> pca_project_row(const Pca& pca, const double* x, std::size_t len);
Matrix pca_project(const Pca& pca, const Matrix& data);

}  // namespace egocurate
