#include "cwcl/losses.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace cwcl::losses {

namespace {

void check_finite(const Eigen::MatrixXd& m, const char* what) {
  if (!m.allFinite())
    throw std::invalid_argument(std::string(what) + ": non-finite input");
}

void check_tau(double tau) {
  if (!(tau > 0.0))
    throw std::invalid_argument("temperature must be strictly positive, got " +
                                std::to_string(tau));
}

/// Row-normalize; throws on zero rows. Returns norms.
Eigen::VectorXd normalize_rows(const Eigen::MatrixXd& z, Eigen::MatrixXd& u,
                               const char* what) {
  Eigen::VectorXd norms = z.rowwise().norm();
  for (Eigen::Index i = 0; i < norms.size(); ++i) {
    if (!(norms[i] > 0.0))
      throw std::invalid_argument(std::string(what) + ": zero vector at row " +
                                  std::to_string(i));
  }
  u = norms.cwiseInverse().asDiagonal() * z;
  return norms;
}

/// Backprop through S = U U^T and row normalization. w holds dL/dS.
void grad_through_similarity(const Eigen::MatrixXd& z, const Eigen::MatrixXd& u,
                             const Eigen::VectorXd& norms,
                             const Eigen::MatrixXd& w, Eigen::MatrixXd& dz) {
  const Eigen::MatrixXd du = (w + w.transpose()) * u;
  dz.resizeLike(z);
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double along = du.row(i).dot(u.row(i));
    dz.row(i) = (du.row(i) - along * u.row(i)) / norms[i];
  }
}

/// Shared core of Eq.-1/Eq.-2 style paired InfoNCE. Rows 0..half-1 pair with
/// rows half..2*half-1. Sums the anchor terms for rows in [a_begin, a_end).
/// When grad != nullptr, accumulates dL/dS into it.
double paired_infonce(const Eigen::MatrixXd& s, double tau, Eigen::Index half,
                      Eigen::Index a_begin, Eigen::Index a_end, double scale,
                      Eigen::MatrixXd* grad) {
  const Eigen::Index n = s.rows();
  double loss = 0.0;
  Eigen::VectorXd e(n);
  for (Eigen::Index i = a_begin; i < a_end; ++i) {
    const Eigen::Index partner = (i < half) ? i + half : i - half;
    // Stable log-sum-exp over k != i; the positive k=partner stays included.
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < n; ++k)
      if (k != i) mx = std::max(mx, s(i, k) / tau);
    double denom = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
      e[k] = (k == i) ? 0.0 : std::exp(s(i, k) / tau - mx);
      denom += e[k];
    }
    const double lse = mx + std::log(denom);
    loss += scale * (-s(i, partner) / tau + lse);
    if (grad) {
      for (Eigen::Index k = 0; k < n; ++k) {
        if (k == i) continue;
        (*grad)(i, k) += scale * (e[k] / denom) / tau;
      }
      (*grad)(i, partner) -= scale / tau;
    }
  }
  return loss;
}

double paired_loss_impl(const Eigen::MatrixXd& z, double tau, bool symmetrize,
                        Eigen::MatrixXd* dz, const char* what) {
  check_tau(tau);
  check_finite(z, what);
  const Eigen::Index n = z.rows();
  if (n < 2 || n % 2 != 0)
    throw std::invalid_argument(std::string(what) + ": expected 2N rows, got " +
                                std::to_string(n));
  const Eigen::Index half = n / 2;

  Eigen::MatrixXd u;
  const Eigen::VectorXd norms = normalize_rows(z, u, what);
  const Eigen::MatrixXd s = u * u.transpose();

  Eigen::MatrixXd w;
  if (dz) w = Eigen::MatrixXd::Zero(n, n);

  double loss;
  if (!symmetrize) {
    loss = paired_infonce(s, tau, half, 0, half, 1.0, dz ? &w : nullptr);
  } else {
    loss = paired_infonce(s, tau, half, 0, n, 0.5, dz ? &w : nullptr);
  }
  if (dz) grad_through_similarity(z, u, norms, w, *dz);
  return loss;
}

}  // namespace

double cosine_sim(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  check_finite(a, "cosine_sim");
  check_finite(b, "cosine_sim");
  const double na = a.norm(), nb = b.norm();
  if (!(na > 0.0) || !(nb > 0.0))
    throw std::invalid_argument("cosine_sim: zero vector");
  return a.dot(b) / (na * nb);
}

void cosine_sim_grad(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                     Eigen::VectorXd& da, Eigen::VectorXd& db) {
  const double na = a.norm(), nb = b.norm();
  if (!(na > 0.0) || !(nb > 0.0))
    throw std::invalid_argument("cosine_sim_grad: zero vector");
  const Eigen::VectorXd ua = a / na, ub = b / nb;
  const double s = ua.dot(ub);
  da = (ub - s * ua) / na;
  db = (ua - s * ub) / nb;
}

double iwcl_loss(const Eigen::MatrixXd& z, double tau, bool symmetrize) {
  return paired_loss_impl(z, tau, symmetrize, nullptr, "iwcl_loss");
}

double iwcl_loss_grad(const Eigen::MatrixXd& z, double tau, bool symmetrize,
                      Eigen::MatrixXd& dz) {
  return paired_loss_impl(z, tau, symmetrize, &dz, "iwcl_loss");
}

double cwcl_loss(const Eigen::MatrixXd& channels, double tau, bool symmetrize) {
  return paired_loss_impl(channels, tau, symmetrize, nullptr, "cwcl_loss");
}

double cwcl_loss_grad(const Eigen::MatrixXd& channels, double tau,
                      bool symmetrize, Eigen::MatrixXd& dchannels) {
  return paired_loss_impl(channels, tau, symmetrize, &dchannels, "cwcl_loss");
}

double cwcl_loss_batched(const std::vector<Eigen::MatrixXd>& per_sample,
                         double tau, bool symmetrize) {
  if (per_sample.empty())
    throw std::invalid_argument("cwcl_loss_batched: empty batch");
  double sum = 0.0;
  for (const auto& c : per_sample) sum += cwcl_loss(c, tau, symmetrize);
  return sum / static_cast<double>(per_sample.size());
}

double supcon_loss(const Eigen::MatrixXd& features,
                   const std::vector<int>& labels, double tau) {
  Eigen::MatrixXd unused;
  return supcon_loss_grad(features, labels, tau, unused);
}

double supcon_loss_grad(const Eigen::MatrixXd& features,
                        const std::vector<int>& labels, double tau,
                        Eigen::MatrixXd& dfeatures) {
  check_tau(tau);
  check_finite(features, "supcon_loss");
  const Eigen::Index n = features.rows();
  if (n < 2) throw std::invalid_argument("supcon_loss: need at least 2 rows");
  if (static_cast<Eigen::Index>(labels.size()) != n)
    throw std::invalid_argument("supcon_loss: labels/features length mismatch");

  Eigen::MatrixXd u;
  const Eigen::VectorXd norms = normalize_rows(features, u, "supcon_loss");
  const Eigen::MatrixXd s = u * u.transpose();

  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
  double loss = 0.0;
  Eigen::VectorXd e(n);
  for (Eigen::Index a = 0; a < n; ++a) {
    int pos_count = 0;
    for (Eigen::Index p = 0; p < n; ++p)
      if (p != a && labels[p] == labels[a]) ++pos_count;
    if (pos_count == 0)
      throw std::invalid_argument("supcon_loss: anchor " + std::to_string(a) +
                                  " has no positives");
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < n; ++k)
      if (k != a) mx = std::max(mx, s(a, k) / tau);
    double denom = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
      e[k] = (k == a) ? 0.0 : std::exp(s(a, k) / tau - mx);
      denom += e[k];
    }
    const double lse = mx + std::log(denom);
    double pos_sim_sum = 0.0;
    for (Eigen::Index p = 0; p < n; ++p) {
      if (p == a || labels[p] != labels[a]) continue;
      pos_sim_sum += s(a, p);
      w(a, p) -= 1.0 / (tau * pos_count);
    }
    loss += -pos_sim_sum / (tau * pos_count) + lse;
    for (Eigen::Index k = 0; k < n; ++k) {
      if (k == a) continue;
      w(a, k) += (e[k] / denom) / tau;
    }
  }
  grad_through_similarity(features, u, norms, w, dfeatures);
  return loss;
}

double ce_loss(const Eigen::MatrixXd& logits, const std::vector<int>& labels) {
  Eigen::MatrixXd unused;
  return ce_loss_grad(logits, labels, unused);
}

double ce_loss_grad(const Eigen::MatrixXd& logits,
                    const std::vector<int>& labels, Eigen::MatrixXd& dlogits) {
  check_finite(logits, "ce_loss");
  const Eigen::Index b = logits.rows(), k = logits.cols();
  if (b == 0) throw std::invalid_argument("ce_loss: empty batch");
  if (static_cast<Eigen::Index>(labels.size()) != b)
    throw std::invalid_argument("ce_loss: labels/logits length mismatch");
  dlogits.resizeLike(logits);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < b; ++i) {
    const int y = labels[i];
    if (y < 0 || y >= k)
      throw std::invalid_argument("ce_loss: label " + std::to_string(y) +
                                  " out of range [0," + std::to_string(k) + ")");
    const double mx = logits.row(i).maxCoeff();
    const Eigen::ArrayXd ex = (logits.row(i).array() - mx).exp();
    const double denom = ex.sum();
    loss += -(logits(i, y) - mx - std::log(denom));
    dlogits.row(i) = (ex / denom).matrix().transpose();
    dlogits(i, y) -= 1.0;
  }
  dlogits /= static_cast<double>(b);
  return loss / static_cast<double>(b);
}

double StageLossParts::recombine() const {
  const auto layer_count = static_cast<double>(contrastive_per_layer.size());
  double sum = 0.0;
  for (double v : contrastive_per_layer) sum += v;
  return (1.0 - lambda) * ce + (lambda / layer_count) * sum;
}

namespace {
StageLossParts stage_total(double ce, const std::vector<double>& per_layer,
                           double lambda, const char* what) {
  if (per_layer.empty())
    throw std::invalid_argument(std::string(what) + ": empty per-layer list");
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw std::invalid_argument(std::string(what) + ": lambda " +
                                std::to_string(lambda) + " outside [0,1]");
  StageLossParts parts;
  parts.ce = ce;
  parts.contrastive_per_layer = per_layer;
  parts.lambda = lambda;
  parts.total = parts.recombine();
  return parts;
}
}  // namespace

StageLossParts stage1_total(double ce, const std::vector<double>& cwcl_per_layer,
                            double lambda) {
  return stage_total(ce, cwcl_per_layer, lambda, "stage1_total");
}

StageLossParts stage2_total(double ce,
                            const std::vector<double>& supcon_per_layer,
                            double lambda) {
  return stage_total(ce, supcon_per_layer, lambda, "stage2_total");
}

}  // namespace cwcl::losses
