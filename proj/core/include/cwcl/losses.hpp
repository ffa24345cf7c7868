#pragma once

#include <Eigen/Core>
#include <vector>

namespace cwcl::losses {

/// Temperatures and anchor convention for the contrastive kernels.
struct ContrastConfig {
  double tau_cwcl = 0.5;
  double tau_supcon = 0.1;
  bool symmetrize = false;  // anchor both views and halve, instead of first view only
};

/// Cosine similarity a.b / (|a||b|). Zero-norm inputs are a bug upstream
/// (projection heads normalize), so they throw rather than fudge an epsilon.
double cosine_sim(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

/// d(cosine_sim)/da and /db.
void cosine_sim_grad(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                     Eigen::VectorXd& da, Eigen::VectorXd& db);

/// Instance-wise contrastive loss over 2N stacked view vectors (rows).
/// Row i and row i+N are the two views of instance i. Anchors are rows
/// 0..N-1; the denominator runs over all k != i and includes the positive.
/// With symmetrize, rows N..2N-1 anchor too and the sum is halved.
double iwcl_loss(const Eigen::MatrixXd& z, double tau, bool symmetrize = false);

/// Same value, plus the analytic gradient w.r.t. every input row.
double iwcl_loss_grad(const Eigen::MatrixXd& z, double tau, bool symmetrize,
                      Eigen::MatrixXd& dz);

/// Channel-wise contrastive loss for ONE sample: 2M stacked channel vectors,
/// row i and i+M being the same channel index from the two views. Identical
/// structure to iwcl_loss with channels in place of instances.
double cwcl_loss(const Eigen::MatrixXd& channels, double tau,
                 bool symmetrize = false);
double cwcl_loss_grad(const Eigen::MatrixXd& channels, double tau,
                      bool symmetrize, Eigen::MatrixXd& dchannels);

/// Batched variant: mean over samples of the per-sample cwcl_loss. Channels
/// from different samples are never negatives of each other.
double cwcl_loss_batched(const std::vector<Eigen::MatrixXd>& per_sample,
                         double tau, bool symmetrize = false);

/// Supervised contrastive loss (multiview batch, every row anchors). For
/// each anchor the -log softmax similarity is averaged over all same-label
/// rows excluding self; anchors with zero positives throw.
double supcon_loss(const Eigen::MatrixXd& features,
                   const std::vector<int>& labels, double tau);
double supcon_loss_grad(const Eigen::MatrixXd& features,
                        const std::vector<int>& labels, double tau,
                        Eigen::MatrixXd& dfeatures);

/// Mean negative log-softmax of the labeled class.
double ce_loss(const Eigen::MatrixXd& logits, const std::vector<int>& labels);
double ce_loss_grad(const Eigen::MatrixXd& logits,
                    const std::vector<int>& labels, Eigen::MatrixXd& dlogits);

/// Per-stage composite bookkeeping: total = (1-lambda)*ce + (lambda/L)*sum.
struct StageLossParts {
  double ce = 0.0;
  std::vector<double> contrastive_per_layer;
  double lambda = 0.0;
  double total = 0.0;

  /// Recomputes the combination identity (used by tests and metrics checks).
  double recombine() const;
};

StageLossParts stage1_total(double ce, const std::vector<double>& cwcl_per_layer,
                            double lambda);
StageLossParts stage2_total(double ce,
                            const std::vector<double>& supcon_per_layer,
                            double lambda);

}  // namespace cwcl::losses
