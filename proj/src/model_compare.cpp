#include "jointfit/model_compare.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "jointfit/error.hpp"
#include "jointfit/stats.hpp"

namespace jointfit {

namespace {

void check_finite(double v, std::size_t j) {
  if (!std::isfinite(v)) {
    throw EvaluationError("pointwise",
                          "non-finite pointwise log-likelihood at observation " + std::to_string(j));
  }
}

}  // namespace

PointwiseAccumulator::PointwiseAccumulator(std::size_t n)
    : max_(n, -std::numeric_limits<double>::infinity()), sum_exp_(n, 0.0), mean_(n, 0.0), m2_(n, 0.0) {}

void PointwiseAccumulator::add(std::span<const double> ll) {
  if (ll.size() != max_.size()) {
    throw InputError("pointwise draw has " + std::to_string(ll.size()) + " entries, expected " +
                     std::to_string(max_.size()));
  }
  ++draws_;
  const double k = static_cast<double>(draws_);
  for (std::size_t j = 0; j < ll.size(); ++j) {
    const double v = ll[j];
    check_finite(v, j);
    if (v > max_[j]) {
      sum_exp_[j] = sum_exp_[j] * std::exp(max_[j] - v) + 1.0;
      max_[j] = v;
    } else {
      sum_exp_[j] += std::exp(v - max_[j]);
    }
    const double delta = v - mean_[j];
    mean_[j] += delta / k;
    m2_[j] += delta * (v - mean_[j]);
  }
}

std::vector<double> PointwiseAccumulator::log_mean_exp() const {
  std::vector<double> out(max_.size());
  const double log_s = std::log(static_cast<double>(draws_));
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = max_[j] + std::log(sum_exp_[j]) - log_s;
  return out;
}

std::vector<double> PointwiseAccumulator::mean() const { return mean_; }

std::vector<double> PointwiseAccumulator::variance() const {
  std::vector<double> out(m2_.size(), 0.0);
  if (draws_ < 2) return out;
  for (std::size_t j = 0; j < out.size(); ++j) {
    out[j] = std::max(0.0, m2_[j] / static_cast<double>(draws_ - 1));
  }
  return out;
}

PointwiseCriteria compute_waic(const Eigen::MatrixXd& ll) {
  if (ll.rows() < 2) throw InputError("WAIC needs at least two posterior draws");
  const auto n = static_cast<std::size_t>(ll.cols());
  PointwiseCriteria c;
  c.waic_contrib.resize(n);
  c.lppd_pointwise.resize(n);
  c.p_waic_pointwise.resize(n);
  std::vector<double> col(static_cast<std::size_t>(ll.rows()));
  for (std::size_t j = 0; j < n; ++j) {
    for (Eigen::Index s = 0; s < ll.rows(); ++s) {
      col[static_cast<std::size_t>(s)] = ll(s, static_cast<Eigen::Index>(j));
      check_finite(col[static_cast<std::size_t>(s)], j);
    }
    const double lppd = log_sum_exp(col) - std::log(static_cast<double>(col.size()));
    const double pw = std::max(0.0, variance(col));
    c.lppd_pointwise[j] = lppd;
    c.p_waic_pointwise[j] = pw;
    c.waic_contrib[j] = -2.0 * (lppd - pw);
    c.lppd += lppd;
    c.p_waic += pw;
  }
  c.waic = -2.0 * (c.lppd - c.p_waic);
  return c;
}

DicResult compute_dic(const Eigen::MatrixXd& ll, std::span<const double> at_mean) {
  if (static_cast<std::size_t>(ll.cols()) != at_mean.size()) {
    throw InputError("log-likelihood at the posterior mean has " + std::to_string(at_mean.size()) +
                     " entries, expected " + std::to_string(ll.cols()));
  }
  if (ll.rows() < 1) throw InputError("DIC needs at least one posterior draw");
  DicResult r;
  r.contrib.resize(at_mean.size());
  double dbar = 0.0;
  double dhat = 0.0;
  for (std::size_t j = 0; j < at_mean.size(); ++j) {
    const auto col = ll.col(static_cast<Eigen::Index>(j));
    for (Eigen::Index s = 0; s < col.size(); ++s) check_finite(col(s), j);
    check_finite(at_mean[j], j);
    const double dbar_j = -2.0 * col.mean();
    const double dhat_j = -2.0 * at_mean[j];
    r.contrib[j] = 2.0 * dbar_j - dhat_j;
    dbar += dbar_j;
    dhat += dhat_j;
  }
  r.p_dic = dbar - dhat;
  r.dic = dbar + r.p_dic;
  return r;
}

PointwiseCriteria criteria_from_summary(const PointwiseAccumulator& acc,
                                        std::span<const double> at_mean) {
  if (acc.draws() < 2) throw InputError("WAIC needs at least two posterior draws");
  if (at_mean.size() != acc.size()) {
    throw InputError("log-likelihood at the posterior mean has " + std::to_string(at_mean.size()) +
                     " entries, expected " + std::to_string(acc.size()));
  }
  PointwiseCriteria c;
  c.lppd_pointwise = acc.log_mean_exp();
  c.p_waic_pointwise = acc.variance();
  const std::vector<double> mean = acc.mean();
  const std::size_t n = acc.size();
  c.waic_contrib.resize(n);
  c.dic_contrib.resize(n);
  double dbar = 0.0;
  double dhat = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    check_finite(at_mean[j], j);
    c.waic_contrib[j] = -2.0 * (c.lppd_pointwise[j] - c.p_waic_pointwise[j]);
    c.lppd += c.lppd_pointwise[j];
    c.p_waic += c.p_waic_pointwise[j];
    dbar += -2.0 * mean[j];
    dhat += -2.0 * at_mean[j];
    c.dic_contrib[j] = -4.0 * mean[j] + 2.0 * at_mean[j];
  }
  c.waic = -2.0 * (c.lppd - c.p_waic);
  c.p_dic = dbar - dhat;
  c.dic = dbar + c.p_dic;
  return c;
}

PointwiseCriteria criteria_subset(const PointwiseCriteria& c, std::size_t begin, std::size_t end) {
  if (begin > end || end > c.waic_contrib.size()) throw InputError("observation range out of bounds");
  PointwiseCriteria s;
  s.waic_contrib.assign(c.waic_contrib.begin() + begin, c.waic_contrib.begin() + end);
  s.lppd_pointwise.assign(c.lppd_pointwise.begin() + begin, c.lppd_pointwise.begin() + end);
  s.p_waic_pointwise.assign(c.p_waic_pointwise.begin() + begin, c.p_waic_pointwise.begin() + end);
  if (c.dic_contrib.size() == c.waic_contrib.size()) {
    s.dic_contrib.assign(c.dic_contrib.begin() + begin, c.dic_contrib.begin() + end);
  }
  for (double v : s.lppd_pointwise) s.lppd += v;
  for (double v : s.p_waic_pointwise) s.p_waic += v;
  s.waic = -2.0 * (s.lppd - s.p_waic);
  for (double v : s.dic_contrib) s.dic += v;
  s.p_dic = std::numeric_limits<double>::quiet_NaN();
  return s;
}

PairwiseWaicResult pairwise_waic_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw InputError("pairwise WAIC test needs equal observation counts (" +
                     std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
  }
  if (a.empty()) throw InputError("pairwise WAIC test needs at least one observation");
  PairwiseWaicResult r;
  r.n = a.size();
  std::vector<double> d(a.size());
  for (std::size_t j = 0; j < d.size(); ++j) {
    d[j] = a[j] - b[j];
    r.delta += d[j];
  }
  const double n = static_cast<double>(r.n);
  r.mean = r.delta / n;
  r.sd = std::sqrt(variance(d));
  r.se = r.sd / std::sqrt(n);
  r.se_total = std::sqrt(n) * r.sd;
  if (r.sd > 0.0) {
    r.z = r.delta / r.se_total;
    r.p = std::min(1.0, 2.0 * normal_cdf(-std::abs(r.z)));
  } else {
    r.z = 0.0;
    r.p = r.delta == 0.0 ? 1.0 : 0.0;
  }
  return r;
}

PairwiseWaicResult pairwise_waic_test(const PointwiseCriteria& a, const PointwiseCriteria& b) {
  return pairwise_waic_test(a.waic_contrib, b.waic_contrib);
}

}  // namespace jointfit
