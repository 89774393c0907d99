#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <vector>

namespace jointfit {

/// Streaming per-observation summary of S posterior draws of the
/// pointwise log-likelihood: running log-sum-exp and Welford moments.
class PointwiseAccumulator {
 public:
  explicit PointwiseAccumulator(std::size_t n_observations);

  void add(std::span<const double> loglik);

  std::size_t draws() const { return draws_; }
  std::size_t size() const { return max_.size(); }
  /// log mean_s exp(l_sj).
  std::vector<double> log_mean_exp() const;
  std::vector<double> mean() const;
  /// Unbiased variance over draws.
  std::vector<double> variance() const;

 private:
  std::size_t draws_ = 0;
  std::vector<double> max_;
  std::vector<double> sum_exp_;  // sum exp(l - max_)
  std::vector<double> mean_;
  std::vector<double> m2_;
};

struct PointwiseCriteria {
  std::vector<double> waic_contrib;  // -2 (lppd_j - p_waic_j)
  std::vector<double> lppd_pointwise;
  std::vector<double> p_waic_pointwise;
  std::vector<double> dic_contrib;   // per-observation D-bar_j + p_dic_j (empty without DIC)
  double lppd = 0.0;
  double p_waic = 0.0;
  double waic = 0.0;
  double dic = 0.0;
  double p_dic = 0.0;
};

/// WAIC from an S x n matrix of pointwise log-likelihoods.
PointwiseCriteria compute_waic(const Eigen::MatrixXd& pointwise_loglik);

struct DicResult {
  double dic = 0.0;
  double p_dic = 0.0;
  std::vector<double> contrib;
};

DicResult compute_dic(const Eigen::MatrixXd& pointwise_loglik, std::span<const double> loglik_at_mean);

/// WAIC and DIC from a streamed summary and the log-likelihood at the
/// posterior mean.
PointwiseCriteria criteria_from_summary(const PointwiseAccumulator& acc,
                                        std::span<const double> loglik_at_mean);

/// WAIC/DIC totals over a contiguous range of observations.
PointwiseCriteria criteria_subset(const PointwiseCriteria& c, std::size_t begin, std::size_t end);

struct PairwiseWaicResult {
  double delta = 0.0;     // sum of d_j = waic_a - waic_b
  double mean = 0.0;      // delta / n
  double sd = 0.0;        // unbiased sd of d_j
  double se = 0.0;        // sd / sqrt(n), so z = delta / (n se)
  double se_total = 0.0;  // sqrt(n) sd
  double z = 0.0;
  double p = 1.0;
  std::size_t n = 0;
};

PairwiseWaicResult pairwise_waic_test(std::span<const double> waic_contrib_a,
                                      std::span<const double> waic_contrib_b);
PairwiseWaicResult pairwise_waic_test(const PointwiseCriteria& a, const PointwiseCriteria& b);

}  // namespace jointfit
