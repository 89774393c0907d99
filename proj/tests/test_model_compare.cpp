#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "jointfit/error.hpp"
#include "jointfit/model_compare.hpp"

using namespace jointfit;

namespace {

Eigen::MatrixXd random_loglik(int draws, int n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01;
  Eigen::MatrixXd m(draws, n);
  for (int j = 0; j < n; ++j) {
    const double centre = -1.0 - std::abs(n01(rng));
    const double spread = 0.05 + 0.5 * std::abs(n01(rng));
    for (int s = 0; s < draws; ++s) m(s, j) = centre + spread * n01(rng);
  }
  return m;
}

// Direct two-pass WAIC for one column.
void direct_waic(const Eigen::VectorXd& col, double& lppd, double& pw) {
  double mx = col.maxCoeff();
  lppd = mx + std::log((col.array() - mx).exp().mean());
  const double m = col.mean();
  pw = (col.array() - m).square().sum() / (col.size() - 1);
}

}  // namespace

TEST_CASE("two-draw WAIC example") {
  Eigen::MatrixXd ll(2, 1);
  ll << 0.0, std::log(3.0);
  const PointwiseCriteria c = compute_waic(ll);
  const double l3 = std::log(3.0);
  CHECK(c.lppd == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  CHECK(c.p_waic == doctest::Approx(l3 * l3 / 2.0).epsilon(1e-14));
  CHECK(c.waic == doctest::Approx(-2.0 * (std::log(2.0) - l3 * l3 / 2.0)).epsilon(1e-14));
  CHECK(c.waic_contrib[0] == doctest::Approx(c.waic).epsilon(1e-14));
}

TEST_CASE("identical draws give zero effective parameters") {
  Eigen::MatrixXd ll(5, 3);
  for (int s = 0; s < 5; ++s) ll.row(s) << -1.0, -2.5, -0.25;
  const PointwiseCriteria c = compute_waic(ll);
  CHECK(c.p_waic == 0.0);
  CHECK(c.waic == doctest::Approx(-2.0 * (-3.75)).epsilon(1e-14));
  const std::vector<double> at_mean{-1.0, -2.5, -0.25};
  const DicResult d = compute_dic(ll, at_mean);
  CHECK(d.p_dic == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(d.dic == doctest::Approx(7.5).epsilon(1e-14));
}

TEST_CASE("WAIC matches a direct two-pass computation") {
  const Eigen::MatrixXd ll = random_loglik(300, 40, 1);
  const PointwiseCriteria c = compute_waic(ll);
  double lppd = 0.0;
  double pw = 0.0;
  for (int j = 0; j < ll.cols(); ++j) {
    double a = 0.0;
    double b = 0.0;
    direct_waic(ll.col(j), a, b);
    CHECK(c.lppd_pointwise[j] == doctest::Approx(a).epsilon(1e-12));
    CHECK(c.p_waic_pointwise[j] == doctest::Approx(b).epsilon(1e-10));
    CHECK(c.waic_contrib[j] == doctest::Approx(-2.0 * (a - b)).epsilon(1e-12));
    lppd += a;
    pw += b;
  }
  CHECK(c.waic == doctest::Approx(-2.0 * (lppd - pw)).epsilon(1e-12));
}

TEST_CASE("duplicating observations doubles WAIC and DIC") {
  const Eigen::MatrixXd ll = random_loglik(100, 10, 2);
  Eigen::MatrixXd dup(ll.rows(), 2 * ll.cols());
  dup << ll, ll;
  std::vector<double> at_mean(10);
  for (int j = 0; j < 10; ++j) at_mean[j] = ll.col(j).mean() + 0.01;
  std::vector<double> at_mean2 = at_mean;
  at_mean2.insert(at_mean2.end(), at_mean.begin(), at_mean.end());
  CHECK(compute_waic(dup).waic == doctest::Approx(2.0 * compute_waic(ll).waic).epsilon(1e-13));
  CHECK(compute_dic(dup, at_mean2).dic == doctest::Approx(2.0 * compute_dic(ll, at_mean).dic).epsilon(1e-13));
}

TEST_CASE("two-draw DIC example") {
  Eigen::MatrixXd ll(2, 1);
  ll << -1.0, -3.0;
  const std::vector<double> at_mean{-1.8};
  const DicResult d = compute_dic(ll, at_mean);
  CHECK(d.p_dic == doctest::Approx(0.4).epsilon(1e-13));
  CHECK(d.dic == doctest::Approx(4.4).epsilon(1e-13));
  CHECK(d.contrib[0] == doctest::Approx(4.4).epsilon(1e-13));
}

TEST_CASE("streaming accumulator agrees with the matrix path") {
  const Eigen::MatrixXd ll = random_loglik(1000, 25, 3);
  PointwiseAccumulator acc(25);
  std::vector<double> row(25);
  for (int s = 0; s < ll.rows(); ++s) {
    for (int j = 0; j < 25; ++j) row[j] = ll(s, j);
    acc.add(row);
  }
  std::vector<double> at_mean(25);
  for (int j = 0; j < 25; ++j) at_mean[j] = ll.col(j).mean();
  const PointwiseCriteria a = criteria_from_summary(acc, at_mean);
  const PointwiseCriteria b = compute_waic(ll);
  const DicResult d = compute_dic(ll, at_mean);
  CHECK(a.waic == doctest::Approx(b.waic).epsilon(1e-11));
  CHECK(a.p_waic == doctest::Approx(b.p_waic).epsilon(1e-10));
  CHECK(a.dic == doctest::Approx(d.dic).epsilon(1e-11));
  CHECK(a.p_dic == doctest::Approx(d.p_dic).epsilon(1e-8));
  for (int j = 0; j < 25; ++j) CHECK(a.waic_contrib[j] == doctest::Approx(b.waic_contrib[j]).epsilon(1e-11));
}

TEST_CASE("criteria subsets add up") {
  const Eigen::MatrixXd ll = random_loglik(200, 30, 4);
  PointwiseAccumulator acc(30);
  std::vector<double> row(30);
  for (int s = 0; s < ll.rows(); ++s) {
    for (int j = 0; j < 30; ++j) row[j] = ll(s, j);
    acc.add(row);
  }
  std::vector<double> at_mean(30, -1.0);
  const PointwiseCriteria c = criteria_from_summary(acc, at_mean);
  const PointwiseCriteria lo = criteria_subset(c, 0, 12);
  const PointwiseCriteria hi = criteria_subset(c, 12, 30);
  CHECK(lo.waic + hi.waic == doctest::Approx(c.waic).epsilon(1e-12));
  CHECK(lo.dic + hi.dic == doctest::Approx(c.dic).epsilon(1e-12));
  CHECK_THROWS_AS(criteria_subset(c, 12, 31), InputError);
}

TEST_CASE("pairwise test hand example") {
  const std::vector<double> a{2.0, 0.0, 2.0, 0.0};
  const std::vector<double> b{0.0, 0.0, 0.0, 0.0};
  const PairwiseWaicResult r = pairwise_waic_test(a, b);
  CHECK(r.delta == doctest::Approx(4.0));
  CHECK(r.sd == doctest::Approx(1.1547).epsilon(1e-4));
  CHECK(r.se_total == doctest::Approx(2.3094).epsilon(1e-4));
  CHECK(r.z == doctest::Approx(1.7321).epsilon(1e-4));
  CHECK(r.p == doctest::Approx(0.0833).epsilon(1e-3));
  CHECK(r.n == 4);
}

TEST_CASE("pairwise test degenerate cases and errors") {
  const std::vector<double> a{1.0, 2.0, 3.0};
  PairwiseWaicResult r = pairwise_waic_test(a, a);
  CHECK(r.delta == 0.0);
  CHECK(r.z == 0.0);
  CHECK(r.p == 1.0);
  const std::vector<double> shifted{2.0, 3.0, 4.0};
  r = pairwise_waic_test(shifted, a);
  CHECK(r.z == 0.0);
  CHECK(r.p == 0.0);
  CHECK_THROWS_AS(pairwise_waic_test(a, std::vector<double>{1.0, 2.0}), InputError);
}

TEST_CASE("pairwise test properties on random criteria") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n01;
  for (int rep = 0; rep < 50; ++rep) {
    const Eigen::MatrixXd la = random_loglik(50, 60, 100 + rep);
    const Eigen::MatrixXd lb = random_loglik(50, 60, 200 + rep);
    const PointwiseCriteria ca = compute_waic(la);
    const PointwiseCriteria cb = compute_waic(lb);
    const PairwiseWaicResult ab = pairwise_waic_test(ca, cb);
    const PairwiseWaicResult ba = pairwise_waic_test(cb, ca);
    CHECK(std::abs(ab.delta - (ca.waic - cb.waic)) < 1e-9);
    CHECK(ab.z == doctest::Approx(-ba.z).epsilon(1e-12));
    CHECK(ab.p == doctest::Approx(ba.p).epsilon(1e-12));
    CHECK(ab.p >= 0.0);
    CHECK(ab.p <= 1.0);
    CHECK(ab.se_total == doctest::Approx(std::sqrt(60.0) * ab.sd).epsilon(1e-12));

    const double c = 0.1 + std::abs(n01(rng)) * 5.0;
    std::vector<double> da(60);
    std::vector<double> zero(60, 0.0);
    for (int j = 0; j < 60; ++j) da[j] = c * (ca.waic_contrib[j] - cb.waic_contrib[j]);
    const PairwiseWaicResult scaled = pairwise_waic_test(da, zero);
    CHECK(scaled.delta == doctest::Approx(c * ab.delta).epsilon(1e-10));
    CHECK(scaled.se_total == doctest::Approx(c * ab.se_total).epsilon(1e-10));
    CHECK(scaled.z == doctest::Approx(ab.z).epsilon(1e-10));
  }
}

TEST_CASE("non-finite pointwise values are flagged with their index") {
  PointwiseAccumulator acc(3);
  const std::vector<double> bad{-1.0, std::nan(""), -2.0};
  try {
    acc.add(bad);
    FAIL("expected an error");
  } catch (const EvaluationError& e) {
    CHECK(std::string(e.what()).find("1") != std::string::npos);
  }
  CHECK_THROWS_AS(acc.add(std::vector<double>{1.0}), InputError);
  Eigen::MatrixXd one(1, 2);
  one << -1.0, -1.0;
  CHECK_THROWS_AS(compute_waic(one), InputError);
}
