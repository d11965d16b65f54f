#include "egocurate/losses.hpp"

#include <algorithm>
#include <cmath>

namespace egocurate {

namespace {

double row_norm(const Matrix& m, std::size_t r) {
  double acc = 0;
  for (std::size_t c = 0; c < m.cols; ++c) acc += m.at(r, c) * m.at(r, c);
  return std::sqrt(acc);
}

std::vector<double> row_norms_checked(const Matrix& m, const char* name) {
  std::vector<double> norms(m.rows);
  for (std::size_t r = 0; r < m.rows; ++r) {
    norms[r] = row_norm(m, r);
    if (norms[r] == 0.0)
      throw ValidationError(std::string(name) + " row " + std::to_string(r) +
                            " has zero norm");
  }
  return norms;
}

std::vector<double> softmax(const std::vector<double>& z) {
  double max = -std::numeric_limits<double>::infinity();
  for (double v : z) max = std::max(max, v);
  std::vector<double> p(z.size());
  double sum = 0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    p[i] = std::exp(z[i] - max);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

void check_tau(double tau) {
  if (!(tau > 0)) throw ValidationError("temperature must be > 0");
}

}  // namespace

Matrix cosine_matrix(const Matrix& f, const Matrix& t) {
  if (f.cols != t.cols)
    throw ValidationError("cosine_matrix: feature dims differ (" +
                          std::to_string(f.cols) + " vs " + std::to_string(t.cols) +
                          ")");
  const auto f_norm = row_norms_checked(f, "visual");
  const auto t_norm = row_norms_checked(t, "text");
  Matrix s(f.rows, t.rows);
  for (std::size_t i = 0; i < f.rows; ++i)
    for (std::size_t j = 0; j < t.rows; ++j) {
      double dot = 0;
      for (std::size_t c = 0; c < f.cols; ++c) dot += f.at(i, c) * t.at(j, c);
      s.at(i, j) = dot / (f_norm[i] * t_norm[j]);
    }
  return s;
}

GroundTruthMatrix ground_truth_matrix(const std::vector<int>& labels) {
  const std::size_t b = labels.size();
  GroundTruthMatrix q;
  q.raw = Matrix(b, b);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < b; ++j)
      q.raw.at(i, j) = labels[i] == labels[j] ? 1.0 : 0.0;
  q.row_normalized = q.raw;
  q.col_normalized = q.raw;
  for (std::size_t i = 0; i < b; ++i) {
    double row_sum = 0, col_sum = 0;
    for (std::size_t j = 0; j < b; ++j) {
      row_sum += q.raw.at(i, j);
      col_sum += q.raw.at(j, i);
    }
    for (std::size_t j = 0; j < b; ++j) {
      q.row_normalized.at(i, j) /= row_sum;
      q.col_normalized.at(j, i) /= col_sum;
    }
  }
  return q;
}

namespace {

// KL(softmax(z) || q + eps) and, optionally, its gradient w.r.t. z.
double kl_term(const std::vector<double>& z, const std::vector<double>& q,
               std::vector<double>* grad_z) {
  const auto p = softmax(z);
  double loss = 0;
  std::vector<double> g(p.size());
  double dot = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    g[i] = std::log(p[i]) - std::log(q[i] + kKlEpsilon);
    loss += p[i] * g[i];
    dot += p[i] * g[i];
  }
  if (grad_z) {
    grad_z->resize(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) (*grad_z)[i] = p[i] * (g[i] - dot);
  }
  return loss;
}

void check_batch(const Matrix& f, const Matrix& t, const std::vector<int>& labels) {
  if (f.rows != t.rows)
    throw ValidationError("batch sizes differ (" + std::to_string(f.rows) +
                          " vs " + std::to_string(t.rows) + ")");
  if (labels.size() != f.rows)
    throw ValidationError("labels length " + std::to_string(labels.size()) +
                          " does not match batch " + std::to_string(f.rows));
  if (f.rows == 0) throw ValidationError("empty batch");
}

}  // namespace

double kl_contrastive(const Matrix& f, const Matrix& t,
                      const std::vector<int>& labels, double tau) {
  check_tau(tau);
  check_batch(f, t, labels);
  const std::size_t b = f.rows;
  const Matrix s = cosine_matrix(f, t);
  const GroundTruthMatrix q = ground_truth_matrix(labels);

  double loss = 0;
  std::vector<double> z(b), qv(b);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < b; ++j) {
      z[j] = s.at(i, j) / tau;
      qv[j] = q.row_normalized.at(i, j);
    }
    loss += kl_term(z, qv, nullptr) / static_cast<double>(b);
  }
  for (std::size_t j = 0; j < b; ++j) {
    for (std::size_t i = 0; i < b; ++i) {
      z[i] = s.at(i, j) / tau;
      qv[i] = q.col_normalized.at(i, j);
    }
    loss += kl_term(z, qv, nullptr) / static_cast<double>(b);
  }
  return loss;
}

namespace {

// grad_F[i] += sum_j G_ij d cos<f_i,t_j> / d f_i.
Matrix cosine_backprop_left(const Matrix& g, const Matrix& f, const Matrix& t,
                            const Matrix& s) {
  const auto f_norm = row_norms_checked(f, "visual");
  const auto t_norm = row_norms_checked(t, "text");
  Matrix grad(f.rows, f.cols);
  for (std::size_t i = 0; i < f.rows; ++i) {
    for (std::size_t j = 0; j < t.rows; ++j) {
      const double gij = g.at(i, j);
      if (gij == 0) continue;
      for (std::size_t c = 0; c < f.cols; ++c) {
        const double t_hat = t.at(j, c) / t_norm[j];
        const double f_hat = f.at(i, c) / f_norm[i];
        grad.at(i, c) += gij * (t_hat - s.at(i, j) * f_hat) / f_norm[i];
      }
    }
  }
  return grad;
}

Matrix transpose(const Matrix& m) {
  Matrix t(m.cols, m.rows);
  for (std::size_t r = 0; r < m.rows; ++r)
    for (std::size_t c = 0; c < m.cols; ++c) t.at(c, r) = m.at(r, c);
  return t;
}

}  // namespace

Matrix kl_contrastive_grad_f(const Matrix& f, const Matrix& t,
                             const std::vector<int>& labels, double tau) {
  check_tau(tau);
  check_batch(f, t, labels);
  const std::size_t b = f.rows;
  const Matrix s = cosine_matrix(f, t);
  const GroundTruthMatrix q = ground_truth_matrix(labels);

  Matrix g(b, b);
  std::vector<double> z(b), qv(b), gz;
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < b; ++j) {
      z[j] = s.at(i, j) / tau;
      qv[j] = q.row_normalized.at(i, j);
    }
    kl_term(z, qv, &gz);
    for (std::size_t j = 0; j < b; ++j)
      g.at(i, j) += gz[j] / (static_cast<double>(b) * tau);
  }
  for (std::size_t j = 0; j < b; ++j) {
    for (std::size_t i = 0; i < b; ++i) {
      z[i] = s.at(i, j) / tau;
      qv[i] = q.col_normalized.at(i, j);
    }
    kl_term(z, qv, &gz);
    for (std::size_t i = 0; i < b; ++i)
      g.at(i, j) += gz[i] / (static_cast<double>(b) * tau);
  }
  return cosine_backprop_left(g, f, t, s);
}

double ce_contrastive(const Matrix& f_lite, const Matrix& f_heavy, double tau) {
  check_tau(tau);
  if (f_lite.rows != f_heavy.rows)
    throw ValidationError("batch sizes differ");
  if (f_lite.rows == 0) throw ValidationError("empty batch");
  const std::size_t b = f_lite.rows;
  const Matrix s = cosine_matrix(f_lite, f_heavy);

  double loss = 0;
  std::vector<double> z(b);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < b; ++j) z[j] = s.at(i, j) / tau;
    loss -= std::log(softmax(z)[i]) / (2.0 * static_cast<double>(b));
  }
  for (std::size_t j = 0; j < b; ++j) {
    for (std::size_t i = 0; i < b; ++i) z[i] = s.at(i, j) / tau;
    loss -= std::log(softmax(z)[j]) / (2.0 * static_cast<double>(b));
  }
  return loss;
}

CeGradients ce_contrastive_grad(const Matrix& f_lite, const Matrix& f_heavy,
                                double tau) {
  check_tau(tau);
  if (f_lite.rows != f_heavy.rows)
    throw ValidationError("batch sizes differ");
  const std::size_t b = f_lite.rows;
  const Matrix s = cosine_matrix(f_lite, f_heavy);

  Matrix g(b, b);
  std::vector<double> z(b);
  const double scale = 1.0 / (2.0 * static_cast<double>(b) * tau);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < b; ++j) z[j] = s.at(i, j) / tau;
    const auto p = softmax(z);
    for (std::size_t j = 0; j < b; ++j)
      g.at(i, j) += scale * (p[j] - (i == j ? 1.0 : 0.0));
  }
  for (std::size_t j = 0; j < b; ++j) {
    for (std::size_t i = 0; i < b; ++i) z[i] = s.at(i, j) / tau;
    const auto p = softmax(z);
    for (std::size_t i = 0; i < b; ++i)
      g.at(i, j) += scale * (p[i] - (i == j ? 1.0 : 0.0));
  }
  CeGradients grads;
  grads.lite = cosine_backprop_left(g, f_lite, f_heavy, s);
  grads.heavy = cosine_backprop_left(transpose(g), f_heavy, f_lite, transpose(s));
  return grads;
}

double combined_alignment(const Matrix& f_lite, const Matrix& f_heavy,
                          const Matrix& t, const std::vector<int>& labels,
                          double tau) {
  return kl_contrastive(f_lite, t, labels, tau) +
         kl_contrastive(f_heavy, t, labels, tau) +
         ce_contrastive(f_lite, f_heavy, tau);
}

Matrix combined_alignment_grad_lite(const Matrix& f_lite, const Matrix& f_heavy,
                                    const Matrix& t, const std::vector<int>& labels,
                                    double tau) {
  Matrix grad = kl_contrastive_grad_f(f_lite, t, labels, tau);
  const Matrix ce = ce_contrastive_grad(f_lite, f_heavy, tau).lite;
  for (std::size_t i = 0; i < grad.data.size(); ++i) grad.data[i] += ce.data[i];
  return grad;
}

SvsaResult svsa_loss(const std::array<double, 2>& pred,
                     const std::array<double, 2>& motion) {
  const double m_norm = std::hypot(motion[0], motion[1]);
  if (m_norm == 0.0) return {0.0, true};
  const double p_norm = std::hypot(pred[0], pred[1]);
  if (p_norm == 0.0)
    throw ValidationError("svsa_loss: zero-norm prediction");
  const double cos = (pred[0] * motion[0] + pred[1] * motion[1]) / (p_norm * m_norm);
  return {1.0 - cos, false};
}

namespace {

double checked_cosine(const std::vector<double>& a, const std::vector<double>& b,
                      double& a_norm, double& b_norm) {
  if (a.size() != b.size())
    throw ValidationError("counterfactual_loss: dimension mismatch");
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0)
    throw ValidationError("counterfactual_loss: zero-norm vector");
  a_norm = std::sqrt(na);
  b_norm = std::sqrt(nb);
  return dot / (a_norm * b_norm);
}

void check_gamma(double gamma) {
  if (!(gamma > -1.0 && gamma < 1.0))
    throw ValidationError("margin gamma must be in (-1,1)");
}

}  // namespace

double counterfactual_loss(const std::vector<double>& text_feat,
                           const std::vector<double>& visual_cf, double gamma,
                           HingeDirection dir) {
  check_gamma(gamma);
  double tn, vn;
  const double cos = checked_cosine(text_feat, visual_cf, tn, vn);
  const double slack = dir == HingeDirection::below_margin ? gamma - cos : cos - gamma;
  const double h = std::max(0.0, slack);
  return h * h;
}

std::vector<double> counterfactual_loss_grad_v(const std::vector<double>& text_feat,
                                               const std::vector<double>& visual_cf,
                                               double gamma, HingeDirection dir) {
  check_gamma(gamma);
  double tn, vn;
  const double cos = checked_cosine(text_feat, visual_cf, tn, vn);
  const double slack = dir == HingeDirection::below_margin ? gamma - cos : cos - gamma;
  std::vector<double> grad(visual_cf.size(), 0.0);
  if (slack <= 0) return grad;
  const double dloss_dcos =
      dir == HingeDirection::below_margin ? -2.0 * slack : 2.0 * slack;
  for (std::size_t i = 0; i < grad.size(); ++i) {
    const double t_hat = text_feat[i] / tn;
    const double v_hat = visual_cf[i] / vn;
    grad[i] = dloss_dcos * (t_hat - cos * v_hat) / vn;
  }
  return grad;
}

double total_loss(const LossParts& parts, double lambda1, double lambda2) {
  return parts.cl + lambda1 * parts.svsa + lambda2 * parts.cf;
}

}  // namespace egocurate
