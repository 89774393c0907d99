#pragma once

#include <Eigen/Dense>

namespace jointfit {

/// Symmetric matrix with "arrowhead" sparsity: N independent q x q local
/// blocks (one per subject), each coupled only to a dense G x G global block.
/// Variable order is [local_0, ..., local_{N-1}, global].
class BlockArrowMatrix {
 public:
  BlockArrowMatrix() = default;
  BlockArrowMatrix(int blocks, int local_dim, int global_dim);

  int blocks() const { return blocks_; }
  int local_dim() const { return local_dim_; }
  int global_dim() const { return global_dim_; }
  int dim() const { return blocks_ * local_dim_ + global_dim_; }

  /// q x q block of subject i.
  auto local(int i) { return local_.middleCols(i * local_dim_, local_dim_); }
  auto local(int i) const { return local_.middleCols(i * local_dim_, local_dim_); }
  /// q x G coupling between subject i and the global variables.
  auto coupling(int i) { return coupling_.middleCols(i * global_dim_, global_dim_); }
  auto coupling(int i) const { return coupling_.middleCols(i * global_dim_, global_dim_); }
  Eigen::MatrixXd& global() { return global_; }
  const Eigen::MatrixXd& global() const { return global_; }

  Eigen::MatrixXd to_dense() const;
  Eigen::VectorXd multiply(const Eigen::VectorXd& x) const;

 private:
  int blocks_ = 0;
  int local_dim_ = 0;
  int global_dim_ = 0;
  Eigen::MatrixXd local_;     // q x (N q)
  Eigen::MatrixXd coupling_;  // q x (N G)
  Eigen::MatrixXd global_;    // G x G
};

/// Cholesky factor H = L L^T of a positive-definite BlockArrowMatrix via the
/// Schur complement of the local blocks.
class ArrowCholesky {
 public:
  ArrowCholesky() = default;
  explicit ArrowCholesky(const BlockArrowMatrix& h);

  bool ok() const { return ok_; }
  double log_determinant() const { return log_det_; }
  int dim() const { return blocks_ * local_dim_ + global_dim_; }

  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const;
  /// x = L^{-T} z; for z ~ N(0, I) this gives x ~ N(0, H^{-1}).
  Eigen::VectorXd sample_transform(const Eigen::VectorXd& z) const;
  /// diag(H^{-1}).
  Eigen::VectorXd inverse_diagonal() const;
  /// Dense inverse of the global block's Schur complement, i.e. the global
  /// part of H^{-1}.
  Eigen::MatrixXd global_covariance() const;

 private:
  bool ok_ = false;
  int blocks_ = 0;
  int local_dim_ = 0;
  int global_dim_ = 0;
  double log_det_ = 0.0;
  Eigen::MatrixXd local_chol_;  // q x (N q), lower factors
  Eigen::MatrixXd whitened_;    // q x (N G): L_i^{-1} B_i
  Eigen::MatrixXd schur_chol_;  // G x G lower factor of the Schur complement
};

}  // namespace jointfit
