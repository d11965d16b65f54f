#include "egocurate/pca.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

namespace egocurate {

Pca fit_pca(const Matrix& data, std::size_t max_components) {
  if (data.rows < 2) throw ValidationError("pca: need at least 2 points");
  if (data.cols == 0) throw ValidationError("pca: zero-dimensional input");
  const auto n = static_cast<Eigen::Index>(data.rows);
  const auto d = static_cast<Eigen::Index>(data.cols);

  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                 Eigen::RowMajor>>
      x(data.data.data(), n, d);
  Eigen::VectorXd mean = x.colwise().mean();
  Eigen::MatrixXd centered = x.rowwise() - mean.transpose();
  Eigen::MatrixXd cov =
      (centered.transpose() * centered) / static_cast<double>(n);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success)
    throw ValidationError("pca: eigendecomposition failed");

  const std::size_t k = std::min<std::size_t>(max_components, data.cols);
  Pca pca;
  pca.mean.assign(mean.data(), mean.data() + d);
  pca.components = Matrix(k, data.cols);
  pca.eigenvalues.resize(k);
  // Eigen returns ascending eigenvalues; take the top k in descending order.
  for (std::size_t c = 0; c < k; ++c) {
    const Eigen::Index src = d - 1 - static_cast<Eigen::Index>(c);
    Eigen::VectorXd axis = solver.eigenvectors().col(src);
    Eigen::Index arg_max = 0;
    axis.cwiseAbs().maxCoeff(&arg_max);
    if (axis[arg_max] < 0) axis = -axis;
    for (Eigen::Index i = 0; i < d; ++i) pca.components.at(c, i) = axis[i];
    pca.eigenvalues[c] = std::max(0.0, solver.eigenvalues()[src]);
  }
  return pca;
}

std::vector<double> pca_project_row(const Pca& pca, const double* x, std::size_t len) {
  if (len != pca.in_dim())
    throw ValidationError("pca: dimension mismatch (" + std::to_string(len) +
                          " vs " + std::to_string(pca.in_dim()) + ")");
  std::vector<double> out(pca.out_dim(), 0.0);
  for (std::size_t c = 0; c < pca.out_dim(); ++c) {
    double acc = 0;
    const double* axis = pca.components.row(c);
    for (std::size_t i = 0; i < len; ++i) acc += axis[i] * (x[i] - pca.mean[i]);
    out[c] = acc;
  }
  return out;
}

Matrix pca_project(const Pca& pca, const Matrix& data) {
  Matrix out(data.rows, pca.out_dim());
  for (std::size_t r = 0; r < data.rows; ++r) {
    auto p = pca_project_row(pca, data.row(r), data.cols);
    std::copy(p.begin(), p.end(), out.row(r));
  }
  return out;
}

}  // namespace egocurate
