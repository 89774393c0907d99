#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "jointfit/error.hpp"
#include "jointfit/fit.hpp"
#include "jointfit/laplace.hpp"
#include "jointfit/optimize.hpp"
#include "jointfit/report.hpp"
#include "jointfit/simulation.hpp"
#include "jointfit/stats.hpp"
#include "toy_data.hpp"

using namespace jointfit;

namespace {

ModelSpec lmm_spec() {
  ModelSpec s = simulation_spec(AssociationLevel::Linear);
  s.survival_covariates.clear();
  return s;
}

const SimulatedDataset& scenario(const std::string& name, int n) {
  static std::map<std::pair<std::string, int>, SimulatedDataset> cache;
  auto key = std::make_pair(name, n);
  auto it = cache.find(key);
  if (it == cache.end()) {
    ScenarioConfig c = scenario_defaults(name);
    c.N = n;
    c.seed = 2024;
    it = cache.emplace(key, simulate_dataset(c)).first;
  }
  return it->second;
}

const FitResult& scenario1_fit(AssociationLevel level) {
  static std::map<AssociationLevel, FitResult> cache;
  auto it = cache.find(level);
  if (it == cache.end()) it = cache.emplace(level, fit(scenario("linear", 2000).data, simulation_spec(level))).first;
  return it->second;
}

double trapezoid_log(const std::function<double(double)>& log_f, double lo, double hi, int n) {
  std::vector<double> v(n + 1);
  const double h = (hi - lo) / n;
  for (int i = 0; i <= n; ++i) v[i] = log_f(lo + h * i);
  const double ref = *std::max_element(v.begin(), v.end());
  double acc = 0.0;
  for (int i = 0; i <= n; ++i) acc += (i == 0 || i == n ? 0.5 : 1.0) * std::exp(v[i] - ref);
  return ref + std::log(acc * h);
}

}  // namespace

TEST_CASE("pure LMM: mode, precision and covariance match the conjugate solve") {
  const JointDataset d = toy::make(6, 31);
  const ModelSpec spec = lmm_spec();
  const JointModel m(d, spec, ExpandedSurvival{});
  Eigen::VectorXd theta = m.initial_theta();
  theta(0) = std::log(9.0);
  theta(1) = std::log(0.9);
  theta(2) = std::log(0.4);
  theta(3) = std::atanh(0.3);
  const GaussianApproximation a = gaussian_approximation(m, theta);

  const int n = static_cast<int>(d.subject_count());
  const int p = 4;
  const int dim = 2 * n + p;
  REQUIRE(m.layout().dim() == dim);
  const auto& lon = d.longitudinal();
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(lon.size()), dim);
  Eigen::VectorXd y(static_cast<Eigen::Index>(lon.size()));
  for (std::size_t r = 0; r < lon.size(); ++r) {
    const int i = d.subject_index().at(lon[r].subject_id);
    const double t = lon[r].t;
    const double x = lon[r].covariates.at("X");
    A(r, 2 * i) = 1.0;
    A(r, 2 * i + 1) = t;
    A(r, 2 * n) = 1.0;
    A(r, 2 * n + 1) = t;
    A(r, 2 * n + 2) = x;
    A(r, 2 * n + 3) = x * t;
    y(r) = lon[r].y;
  }
  const Eigen::MatrixXd sigma = random_effects_covariance(2, theta.segment(1, 3));
  const Eigen::MatrixXd sigma_inv = sigma.inverse();
  Eigen::MatrixXd Q = 9.0 * A.transpose() * A;
  for (int i = 0; i < n; ++i) Q.block(2 * i, 2 * i, 2, 2) += sigma_inv;
  Q.bottomRightCorner(p, p) += Eigen::MatrixXd::Identity(p, p) / 100.0;
  const Eigen::MatrixXd cov = Q.inverse();
  const Eigen::VectorXd mean = cov * (9.0 * A.transpose() * y);

  CHECK((a.mode - mean).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((a.precision.to_dense() - Q).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((a.factor.inverse_diagonal() - cov.diagonal()).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((a.factor.global_covariance() - cov.bottomRightCorner(p, p)).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(a.gradient_norm < 1e-6);
}

TEST_CASE("Poisson-only intercept: mode solves the scalar score") {
  std::vector<SurvivalRecord> s{{"a", 1.0, 1, {}}, {"b", 1.0, 0, {}}};
  const JointDataset d = validate_and_join({}, s);
  ModelSpec spec;
  spec.fixed_effects = {FixedTerm::parse("1")};
  spec.random_effects.slope = false;
  spec.association.push_back({});
  spec.baseline_knots = 1;
  ExpandedSurvival e;
  e.grid = {0.0, 1.0};
  e.rows = {{0, 0, 0.5, 1.0, 1}, {1, 0, 0.5, 1.0, 0}};
  const JointModel m(d, spec, e);
  REQUIRE(m.layout().baseline == 1);
  Eigen::VectorXd theta = m.initial_theta();
  theta(0) = 0.0;
  theta(m.hyper_layout().gamma_begin()) = 0.0;
  const GaussianApproximation a = gaussian_approximation(m, theta);
  // score(l) = sum c - sum e exp(l)
  double lo = -10.0;
  double hi = 10.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (1.0 - 2.0 * std::exp(mid) > 0.0 ? lo : hi) = mid;
  }
  CHECK(a.mode(m.layout().baseline_offset()) == doctest::Approx(0.5 * (lo + hi)).epsilon(1e-9));
  CHECK(a.gradient_norm < 1e-6);
}

TEST_CASE("Laplace value equals brute-force quadrature on a one-dimensional conjugate toy") {
  std::vector<LongitudinalRecord> lon{{"a", 0.0, 1.2, {}}, {"a", 0.5, 0.7, {}}, {"a", 1.0, 1.9, {}}};
  std::vector<SurvivalRecord> surv{{"a", 1.0, 0, {}}};
  const JointDataset d = validate_and_join(lon, surv);
  ModelSpec spec;
  spec.fixed_effects = {FixedTerm::parse("1")};
  spec.random_effects.intercept = false;
  spec.random_effects.slope = false;
  spec.association.push_back({});
  const JointModel m(d, spec, ExpandedSurvival{});
  REQUIRE(m.layout().dim() == 1);
  for (double log_tau : {-1.0, 0.0, 1.0, 2.5}) {
    Eigen::VectorXd theta = m.initial_theta();
    theta(0) = log_tau;
    const double laplace = log_marginal_posterior(m, theta);
    const double quad = m.log_hyperprior(theta) + trapezoid_log(
                                                      [&](double beta) {
                                                        Eigen::VectorXd u(1);
                                                        u(0) = beta;
                                                        return m.log_density(u, theta);
                                                      },
                                                      -60.0, 60.0, 200000);
    CHECK(std::abs(laplace - quad) <= 1e-4 * std::abs(quad));
  }
}

TEST_CASE("profile over log tau_e is invariant to shifting y with a free intercept") {
  JointDataset d = toy::make(8, 33);
  std::vector<LongitudinalRecord> shifted = d.longitudinal();
  for (auto& r : shifted) r.y += 3.0;
  const JointDataset d2 = validate_and_join(shifted, d.survival());
  ModelSpec spec = lmm_spec();
  spec.priors.fixed_effect_variance = 1e12;
  const JointModel m1(d, spec, ExpandedSurvival{});
  const JointModel m2(d2, spec, ExpandedSurvival{});
  const Eigen::VectorXd base = m1.initial_theta();
  std::vector<double> p1;
  std::vector<double> p2;
  for (double lt : {-1.0, 0.5, 2.0, 3.5}) {
    Eigen::VectorXd t = base;
    t(0) = lt;
    p1.push_back(log_marginal_posterior(m1, t));
    p2.push_back(log_marginal_posterior(m2, t));
  }
  for (std::size_t k = 1; k < p1.size(); ++k) CHECK((p1[k] - p1[0]) - (p2[k] - p2[0]) == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("Newton iterations never decrease the inner objective") {
  const JointDataset d = toy::make(20, 34, 5);
  ModelSpec spec = simulation_spec(AssociationLevel::Linear);
  spec.survival_covariates = {"W"};
  const JointModel m(d, spec);
  Eigen::VectorXd theta = m.initial_theta();
  theta(m.hyper_layout().gamma_begin()) = 0.8;
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n01;
  Eigen::VectorXd start(m.layout().dim());
  for (Eigen::Index k = 0; k < start.size(); ++k) start(k) = 2.0 * n01(rng);
  const GaussianApproximation a = gaussian_approximation(m, theta, &start);
  REQUIRE(a.trace.size() >= 2);
  for (std::size_t k = 1; k < a.trace.size(); ++k) CHECK(a.trace[k] >= a.trace[k - 1]);
  CHECK(a.gradient_norm < 1e-6);
  CHECK((m.gradient(a.mode, theta)).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("Newton failure reports the gradient norm") {
  const JointDataset d = toy::make(10, 35);
  const JointModel m(d, simulation_spec(AssociationLevel::Linear));
  NewtonOptions opts;
  opts.max_iterations = 1;
  opts.polish = false;
  Eigen::VectorXd theta = m.initial_theta();
  theta(m.hyper_layout().gamma_begin()) = 1.5;
  try {
    gaussian_approximation(m, theta, nullptr, opts);
    FAIL("expected non-convergence");
  } catch (const ConvergenceError& e) {
    CHECK(e.gradient_norm() > 1e-6);
  }
}

TEST_CASE("outer optimizer ascends and is stationary at its optimum") {
  const JointDataset d = toy::make(40, 36, 5);
  ModelSpec spec = simulation_spec(AssociationLevel::Linear);
  const JointModel m(d, spec);
  const HyperOptimum o = optimize_hyperparameters(m, m.initial_theta());
  CHECK(o.converged);
  CHECK(o.objective >= o.initial_objective);
  const HyperOptimum again = optimize_hyperparameters(m, o.theta);
  CHECK(std::abs(again.objective - o.objective) < 1e-6);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(o.covariance);
  CHECK(es.eigenvalues().minCoeff() > 0.0);
  CHECK((o.covariance - o.covariance.transpose()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("spd_inverse floors eigenvalues") {
  Eigen::MatrixXd h(2, 2);
  h << 4.0, 0.0, 0.0, -1.0;
  const Eigen::MatrixXd c = spd_inverse(h, 1e-8);
  CHECK(c(0, 0) == doctest::Approx(0.25));
  CHECK(c(1, 1) == doctest::Approx(1e8));
}

TEST_CASE("Level-3 objective with zero deviations equals Level 2 up to the Laplace constants") {
  const JointDataset d = toy::make(25, 37, 5);
  ModelSpec s3 = simulation_spec(AssociationLevel::Spline);
  ModelSpec s2 = simulation_spec(AssociationLevel::Quadratic);
  const JointModel lin(d, s3.linearized());
  const HyperOptimum pre = optimize_hyperparameters(lin, lin.initial_theta());
  const Calibration cal = calibration_from_latent(lin, s3, pre.latent.mode);
  const JointModel m3(d, s3, &cal);
  const JointModel m2(d, s2, &cal);
  Eigen::VectorXd t2 = m2.initial_theta();
  t2.head(5) = pre.theta.head(5);
  const int g = m2.hyper_layout().gamma_begin();
  t2(g) = 0.4;
  t2(g + 1) = -0.3;
  Eigen::VectorXd t3 = Eigen::VectorXd::Zero(m3.hyper_layout().dim());
  t3.head(t2.size()) = t2;
  const double v2 = log_marginal_posterior(m2, t2);
  const double v3 = log_marginal_posterior(m3, t3);
  CHECK(std::abs(v3 - 3.0 * std::log(15.0) - v2) < 1e-8);
}

TEST_CASE("calibration rules") {
  const SimulatedDataset& sim = scenario("linear", 500);
  SUBCASE("level 1 spec keeps nu-tilde without a basis") {
    const Calibration c = calibrate(sim.data, simulation_spec(AssociationLevel::Linear));
    REQUIRE(c.components.size() == 1);
    CHECK_FALSE(c.components[0].basis.has_value());
    CHECK(c.components[0].domain.lo < c.components[0].domain.hi);
    CHECK(c.components[0].nu_tilde.size() == expand_survival(sim.data.survival(), 15, EvaluationPoint::Midpoint).rows.size());
  }
  SUBCASE("nu-tilde tracks the true trajectories") {
    const Calibration c = calibrate(sim.data, simulation_spec(AssociationLevel::Spline));
    REQUIRE(c.components[0].basis.has_value());
    CHECK(c.components[0].knots.size() == 5);
    const std::vector<double> truth = true_shared_values(sim, 15);
    REQUIRE(truth.size() == c.components[0].nu_tilde.size());
    CHECK(correlation(truth, c.components[0].nu_tilde) > 0.95);
    const auto [lo, hi] = std::minmax_element(c.components[0].nu_tilde.begin(), c.components[0].nu_tilde.end());
    CHECK(c.components[0].domain.lo == *lo);
    CHECK(c.components[0].domain.hi == *hi);
  }
}

TEST_CASE("Scenario 1 Level 1 recovers gamma_1 and sigma_e") {
  const SimulatedDataset& sim = scenario("linear", 2000);
  const FitResult& f = scenario1_fit(AssociationLevel::Linear);
  CHECK(f.converged);
  const ParameterSummary* g = f.parameter("gamma1");
  REQUIRE(g != nullptr);
  CHECK(std::abs(g->mode - 0.5) < 0.08);
  // Oracle: sd of residuals around the true trajectories.
  std::vector<double> res;
  for (const auto& r : sim.longitudinal) res.push_back(r.y - sim.trajectories[std::stoul(r.subject_id) - 1].at(r.t));
  const double sd = std::sqrt(variance(res));
  const ParameterSummary* s = f.parameter("sigma_e");
  REQUIRE(s != nullptr);
  CHECK(std::abs(s->mean / sd - 1.0) < 0.05);
  CHECK(std::isfinite(f.criteria.waic));
  CHECK(std::isfinite(f.criteria.dic));
  CHECK(f.criteria.waic_contrib.size() == f.n_longitudinal + f.n_survival_rows);
}

TEST_CASE("Scenario 1 Level 3 shrinks the deviation coefficients") {
  const FitResult& f = scenario1_fit(AssociationLevel::Spline);
  CHECK(f.converged);
  const AssociationCoefficients c = f.association_mode(0);
  REQUIRE(c.gamma.size() == 5);
  for (std::size_t k = 2; k < 5; ++k) CHECK(std::abs(c.gamma[k]) <= 0.1);
}

TEST_CASE("posterior curves") {
  const FitResult& f1 = scenario1_fit(AssociationLevel::Linear);
  const FitResult& f3 = scenario1_fit(AssociationLevel::Spline);
  SUBCASE("anchor at zero for every level") {
    for (const FitResult* f : {&f1, &f3}) {
      const auto c = posterior_curve(*f, 0, {0.0});
      CHECK(c[0].f_mean == 0.0);
      CHECK(c[0].f_lo == 0.0);
      CHECK(c[0].f_hi == 0.0);
    }
  }
  SUBCASE("level 1 is a line through the origin") {
    const std::vector<double> grid{-2.0, -1.0, 1.0, 2.0, 3.0};
    const auto c = posterior_curve(f1, 0, grid);
    for (std::size_t k = 0; k < grid.size(); ++k) {
      CHECK(c[k].f_mean / grid[k] == doctest::Approx(c[2].f_mean).epsilon(1e-12));
      const double lo = grid[k] > 0 ? c[k].f_lo : c[k].f_hi;
      CHECK(lo / grid[k] == doctest::Approx(c[2].f_lo).epsilon(1e-12));
    }
  }
  SUBCASE("grid range and component checks") {
    const auto& dom = f3.calibration.components[0].domain;
    const double w = dom.hi - dom.lo;
    CHECK_NOTHROW(posterior_curve(f3, 0, {dom.hi + 0.19 * w, dom.lo - 0.19 * w}));
    CHECK_THROWS_AS(posterior_curve(f3, 0, {dom.hi + 0.25 * w}), DomainError);
    CHECK_THROWS_AS(posterior_curve(f3, 1, {0.0}), InputError);
    const auto grid = default_curve_grid(f3, 0);
    CHECK(grid.size() == 201);
    CHECK(grid.front() == dom.lo);
    CHECK(grid.back() == dom.hi);
  }
  SUBCASE("curves are reproducible") {
    const auto grid = default_curve_grid(f3, 0, 11);
    const auto a = posterior_curve(f3, 0, grid);
    const auto b = posterior_curve(f3, 0, grid);
    for (std::size_t k = 0; k < a.size(); ++k) CHECK(a[k].f_lo == b[k].f_lo);
  }
}

TEST_CASE("shared component summaries") {
  std::vector<double> v;
  for (int i = 1; i <= 100; ++i) v.push_back(i);
  SharedComponentSummary s = summarize_values(v);
  CHECK(s.percentiles[2] == doctest::Approx(50.5));
  CHECK(s.bin_edges.size() == 51);
  CHECK(s.bin_counts.size() == 50);
  double total = 0.0;
  for (double c : s.bin_counts) total += c;
  CHECK(total == 100.0);

  std::mt19937_64 rng(8);
  std::normal_distribution<double> n01;
  std::vector<double> sym;
  for (int i = 0; i < 5000; ++i) {
    const double z = n01(rng);
    sym.push_back(1.0 + z);
    sym.push_back(1.0 - z);
  }
  s = summarize_values(sym);
  CHECK(s.percentiles[1] + s.percentiles[3] == doctest::Approx(2.0 * s.percentiles[2]).epsilon(1e-9));
}

TEST_CASE("Scenario 2 percentile spread follows the true shared component") {
  const SimulatedDataset& sim = scenario("quadratic", 1000);
  const FitResult f = fit(sim.data, simulation_spec(AssociationLevel::Linear));
  const SharedComponentSummary s = shared_component_summary(f, 0);
  const std::vector<double> truth = true_shared_values(sim, 15);
  const double iqr_true = quantile(truth, 0.75) - quantile(truth, 0.25);
  const double spread_true = quantile(truth, 0.9) - quantile(truth, 0.1);
  CHECK(std::abs((s.percentiles[3] - s.percentiles[1]) / iqr_true - 1.0) < 0.1);
  CHECK(std::abs((s.percentiles[4] - s.percentiles[0]) / spread_true - 1.0) < 0.1);
  // sigma_b0 = 2 dominates the spread.
  CHECK(spread_true > 2.0 * 1.5);
}

TEST_CASE("fits are deterministic under a fixed seed") {
  const JointDataset d = toy::make(30, 38, 5);
  FitOptions opt;
  opt.seed = 11;
  opt.samples = 200;
  const ModelSpec spec = simulation_spec(AssociationLevel::Quadratic);
  const std::string a = fit_to_json(fit(d, spec, opt)).dump();
  const std::string b = fit_to_json(fit(d, spec, opt)).dump();
  CHECK(a == b);
  opt.seed = 12;
  CHECK(fit_to_json(fit(d, spec, opt)).dump() != a);
}
