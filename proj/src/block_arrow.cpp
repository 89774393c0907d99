#include "jointfit/block_arrow.hpp"

#include <cmath>

namespace jointfit {

BlockArrowMatrix::BlockArrowMatrix(int blocks, int local_dim, int global_dim)
    : blocks_(blocks),
      local_dim_(local_dim),
      global_dim_(global_dim),
      local_(Eigen::MatrixXd::Zero(local_dim, static_cast<Eigen::Index>(blocks) * local_dim)),
      coupling_(Eigen::MatrixXd::Zero(local_dim, static_cast<Eigen::Index>(blocks) * global_dim)),
      global_(Eigen::MatrixXd::Zero(global_dim, global_dim)) {}

Eigen::MatrixXd BlockArrowMatrix::to_dense() const {
  const int n = dim();
  const int off = blocks_ * local_dim_;
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < blocks_; ++i) {
    d.block(i * local_dim_, i * local_dim_, local_dim_, local_dim_) = local(i);
    d.block(i * local_dim_, off, local_dim_, global_dim_) = coupling(i);
    d.block(off, i * local_dim_, global_dim_, local_dim_) = coupling(i).transpose();
  }
  d.block(off, off, global_dim_, global_dim_) = global_;
  return d;
}

Eigen::VectorXd BlockArrowMatrix::multiply(const Eigen::VectorXd& x) const {
  Eigen::VectorXd y = Eigen::VectorXd::Zero(dim());
  const auto xg = x.tail(global_dim_);
  y.tail(global_dim_) = global_ * xg;
  for (int i = 0; i < blocks_; ++i) {
    const auto xi = x.segment(i * local_dim_, local_dim_);
    y.segment(i * local_dim_, local_dim_) = local(i) * xi + coupling(i) * xg;
    y.tail(global_dim_) += coupling(i).transpose() * xi;
  }
  return y;
}

ArrowCholesky::ArrowCholesky(const BlockArrowMatrix& h)
    : blocks_(h.blocks()), local_dim_(h.local_dim()), global_dim_(h.global_dim()) {
  const int q = local_dim_;
  const int g = global_dim_;
  local_chol_.resize(q, static_cast<Eigen::Index>(blocks_) * q);
  whitened_.resize(q, static_cast<Eigen::Index>(blocks_) * g);
  Eigen::MatrixXd schur = h.global();
  log_det_ = 0.0;
  for (int i = 0; i < (q > 0 ? blocks_ : 0); ++i) {
    Eigen::LLT<Eigen::MatrixXd> llt(h.local(i));
    if (llt.info() != Eigen::Success) return;
    Eigen::MatrixXd l = llt.matrixL();
    local_chol_.middleCols(i * q, q) = l;
    auto w = whitened_.middleCols(i * g, g);
    w = llt.matrixL().solve(h.coupling(i));
    schur.noalias() -= w.transpose() * w;
    for (int k = 0; k < q; ++k) log_det_ += 2.0 * std::log(l(k, k));
  }
  if (g > 0) {
    Eigen::LLT<Eigen::MatrixXd> llt(schur);
    if (llt.info() != Eigen::Success) return;
    schur_chol_ = llt.matrixL();
    for (int k = 0; k < g; ++k) log_det_ += 2.0 * std::log(schur_chol_(k, k));
  }
  ok_ = std::isfinite(log_det_);
}

Eigen::VectorXd ArrowCholesky::solve(const Eigen::VectorXd& rhs) const {
  const int q = local_dim_;
  const int g = global_dim_;
  Eigen::VectorXd y(rhs.size());
  Eigen::VectorXd yg = rhs.tail(g);
  for (int i = 0; i < blocks_; ++i) {
    const auto l = local_chol_.middleCols(i * q, q).triangularView<Eigen::Lower>();
    Eigen::VectorXd yi = l.solve(rhs.segment(i * q, q));
    yg.noalias() -= whitened_.middleCols(i * g, g).transpose() * yi;
    y.segment(i * q, q) = yi;
  }
  Eigen::VectorXd xg = yg;
  if (g > 0) {
    schur_chol_.triangularView<Eigen::Lower>().solveInPlace(xg);
    schur_chol_.triangularView<Eigen::Lower>().transpose().solveInPlace(xg);
  }
  Eigen::VectorXd x(rhs.size());
  x.tail(g) = xg;
  for (int i = 0; i < blocks_; ++i) {
    const auto l = local_chol_.middleCols(i * q, q).triangularView<Eigen::Lower>();
    Eigen::VectorXd t = y.segment(i * q, q) - whitened_.middleCols(i * g, g) * xg;
    x.segment(i * q, q) = l.transpose().solve(t);
  }
  return x;
}

Eigen::VectorXd ArrowCholesky::sample_transform(const Eigen::VectorXd& z) const {
  const int q = local_dim_;
  const int g = global_dim_;
  Eigen::VectorXd x(z.size());
  Eigen::VectorXd xg = z.tail(g);
  if (g > 0) schur_chol_.triangularView<Eigen::Lower>().transpose().solveInPlace(xg);
  x.tail(g) = xg;
  for (int i = 0; i < blocks_; ++i) {
    const auto l = local_chol_.middleCols(i * q, q).triangularView<Eigen::Lower>();
    Eigen::VectorXd t = z.segment(i * q, q) - whitened_.middleCols(i * g, g) * xg;
    x.segment(i * q, q) = l.transpose().solve(t);
  }
  return x;
}

Eigen::MatrixXd ArrowCholesky::global_covariance() const {
  const int g = global_dim_;
  if (g == 0) return {};
  Eigen::MatrixXd inv = Eigen::MatrixXd::Identity(g, g);
  schur_chol_.triangularView<Eigen::Lower>().solveInPlace(inv);
  schur_chol_.triangularView<Eigen::Lower>().transpose().solveInPlace(inv);
  return inv;
}

Eigen::VectorXd ArrowCholesky::inverse_diagonal() const {
  const int q = local_dim_;
  const int g = global_dim_;
  Eigen::VectorXd d(dim());
  const Eigen::MatrixXd sinv = global_covariance();
  if (g > 0) d.tail(g) = sinv.diagonal();
  for (int i = 0; i < blocks_; ++i) {
    const auto lt = local_chol_.middleCols(i * q, q).triangularView<Eigen::Lower>().transpose();
    // A_i^{-1} = L^{-T} L^{-1};  V = A_i^{-1} B_i = L^{-T} W_i.
    Eigen::MatrixXd linv = Eigen::MatrixXd::Identity(q, q);
    local_chol_.middleCols(i * q, q).triangularView<Eigen::Lower>().solveInPlace(linv);
    Eigen::MatrixXd ainv = linv.transpose() * linv;
    Eigen::VectorXd di = ainv.diagonal();
    if (g > 0) {
      Eigen::MatrixXd v = lt.solve(whitened_.middleCols(i * g, g));
      di += (v * sinv * v.transpose()).diagonal();
    }
    d.segment(i * q, q) = di;
  }
  return d;
}

}  // namespace jointfit
