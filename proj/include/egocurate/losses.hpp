#pragma once

#include <array>
#include <vector>

#include "egocurate/common.hpp"

namespace egocurate {

inline constexpr double kKlEpsilon = 1e-8;  // smoothing inside KL logs
inline constexpr double kDefaultCeTau = 0.07;
inline constexpr double kDefaultLambda1 = 0.2;
inline constexpr double kDefaultLambda2 = 0.1;

// S_ij = cos<f_i, t_j>. Zero-norm rows are rejected.
Matrix cosine_matrix(const Matrix& f, const Matrix& t);

// Binary same-class matrix plus its row- and column-normalized forms (each
// normalized row/column sums to 1; the diagonal guarantees nonzero sums).
struct GroundTruthMatrix {
  Matrix raw;
  Matrix row_normalized;
  Matrix col_normalized;
};
GroundTruthMatrix ground_truth_matrix(const std::vector<int>& labels);

// KL contrastive alignment: mean over rows of KL(softmax(S_i./tau) || Qrow_i.)
// plus mean over columns of KL(softmax(S_.j/tau) || Qcol_.j).
double kl_contrastive(const Matrix& f, const Matrix& t,
                      const std::vector<int>& labels, double tau);
Matrix kl_contrastive_grad_f(const Matrix& f, const Matrix& t,
                             const std::vector<int>& labels, double tau);

// Symmetric InfoNCE between lite and heavy features of the same instances.
double ce_contrastive(const Matrix& f_lite, const Matrix& f_heavy, double tau);
struct CeGradients {
  Matrix lite;
  Matrix heavy;
};
CeGradients ce_contrastive_grad(const Matrix& f_lite, const Matrix& f_heavy,
                                double tau);

// kl(F_l,T,y) + kl(F_h,T,y) + ce(F_l,F_h).
double combined_alignment(const Matrix& f_lite, const Matrix& f_heavy,
                          const Matrix& t, const std::vector<int>& labels,
                          double tau);
Matrix combined_alignment_grad_lite(const Matrix& f_lite, const Matrix& f_heavy,
                                    const Matrix& t, const std::vector<int>& labels,
                                    double tau);

// 1 - cos<pred, m>. Zero camera motion is skipped, not an error; zero pred is
// a model bug and rejected.
struct SvsaResult {
  double value = 0;
  bool skipped = false;
};
SvsaResult svsa_loss(const std::array<double, 2>& pred,
                     const std::array<double, 2>& motion);

// Hinge of the counterfactual constraint. BelowMargin is the formula as
// printed (penalize cos < gamma); AboveMargin is the flipped reading exposed
// behind a flag.
enum class HingeDirection { below_margin, above_margin };

double counterfactual_loss(const std::vector<double>& text_feat,
                           const std::vector<double>& visual_cf, double gamma,
                           HingeDirection dir = HingeDirection::below_margin);
std::vector<double> counterfactual_loss_grad_v(
    const std::vector<double>& text_feat, const std::vector<double>& visual_cf,
    double gamma, HingeDirection dir = HingeDirection::below_margin);

struct LossParts {
  double cl = 0;
  double svsa = 0;
  double cf = 0;
};
double total_loss(const LossParts& parts, double lambda1 = kDefaultLambda1,
                  double lambda2 = kDefaultLambda2);

}  // namespace egocurate
