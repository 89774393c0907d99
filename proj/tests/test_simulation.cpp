#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "jointfit/error.hpp"
#include "jointfit/report.hpp"
#include "jointfit/simulation.hpp"
#include "jointfit/stats.hpp"

using namespace jointfit;

namespace {

ScenarioConfig small(const std::string& name, int n, std::uint64_t seed) {
  ScenarioConfig c = scenario_defaults(name);
  c.N = n;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_CASE("scenario defaults") {
  const ScenarioConfig lin = scenario_defaults("Linear");
  CHECK(lin.true_beta == std::vector<double>{0.0, 0.3, 0.5, 0.2});
  CHECK(lin.true_sigma_e == 0.3);
  CHECK(lin.true_sigma_b == std::vector<double>{0.8, 0.3, 0.3});
  CHECK(lin.true_f(2.0) == doctest::Approx(1.0));
  CHECK(lin.true_level() == AssociationLevel::Linear);
  bool found = false;
  for (const auto& [name, value] : scenario_truths(lin)) {
    if (name == "gamma1") {
      CHECK(value == 0.5);
      found = true;
    }
  }
  CHECK(found);

  const ScenarioConfig quad = scenario_defaults("quadratic");
  CHECK(quad.true_f(2.0) == doctest::Approx(0.2));
  CHECK(quad.true_beta[0] == 0.0);
  CHECK(quad.true_sigma_b == std::vector<double>{2.0, 0.4, 0.2});
  CHECK(quad.true_level() == AssociationLevel::Quadratic);

  const ScenarioConfig spl = scenario_defaults("3");
  CHECK(spl.true_f(0.0) == 0.0);
  CHECK(spl.true_beta[0] == -1.5);
  const double v = 1.7;
  CHECK(spl.true_f(v) == doctest::Approx(v * std::pow(std::log(v * v + 1.0), 1.5) / 8.0));
  CHECK(spl.true_f(-v) == doctest::Approx(-spl.true_f(v)));

  CHECK_THROWS_AS(scenario_defaults("cubic"), ConfigError);
  ScenarioConfig bad = lin;
  bad.true_sigma_b[2] = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("noise-free measurements lie on the true trajectories") {
  ScenarioConfig c = small("linear", 50, 3);
  c.true_sigma_e = 0.0;
  const LongitudinalSimulation s = simulate_longitudinal(c);
  CHECK(s.records.size() == 50u * 21u);
  for (const auto& r : s.records) CHECK(r.y == s.trajectories[std::stoul(r.subject_id) - 1].at(r.t));
}

TEST_CASE("random-effect correlation over 1e5 subjects") {
  const ScenarioConfig c = small("linear", 100000, 4);
  ScenarioConfig slim = c;
  slim.max_follow_up = 0.1;
  const LongitudinalSimulation s = simulate_longitudinal(slim);
  std::vector<double> b0;
  std::vector<double> b1;
  for (const auto& t : s.trajectories) {
    b0.push_back(t.b0);
    b1.push_back(t.b1);
  }
  CHECK(std::abs(correlation(b0, b1) - 0.3) < 0.01);
}

TEST_CASE("generator moments match the configured truths") {
  const ScenarioConfig c = small("linear", 10000, 5);
  const LongitudinalSimulation s = simulate_longitudinal(c);
  std::vector<double> int0, int1, slope0, slope1, b0, b1, res;
  for (const auto& t : s.trajectories) {
    (t.x == 0.0 ? int0 : int1).push_back(t.intercept);
    (t.x == 0.0 ? slope0 : slope1).push_back(t.slope);
    b0.push_back(t.b0);
    b1.push_back(t.b1);
  }
  for (const auto& r : s.records) res.push_back(r.y - s.trajectories[std::stoul(r.subject_id) - 1].at(r.t));
  auto se_mean = [](const std::vector<double>& v) { return std::sqrt(variance(v) / v.size()); };
  CHECK(std::abs(mean(int0) - 0.0) < 3 * se_mean(int0));
  CHECK(std::abs(mean(slope0) - 0.3) < 3 * se_mean(slope0));
  CHECK(std::abs(mean(int1) - mean(int0) - 0.5) < 3 * std::hypot(se_mean(int0), se_mean(int1)));
  CHECK(std::abs(mean(slope1) - mean(slope0) - 0.2) < 3 * std::hypot(se_mean(slope0), se_mean(slope1)));
  const double n = static_cast<double>(b0.size());
  CHECK(std::abs(std::sqrt(variance(b0)) - 0.8) < 3 * 0.8 / std::sqrt(2 * n));
  CHECK(std::abs(std::sqrt(variance(b1)) - 0.3) < 3 * 0.3 / std::sqrt(2 * n));
  CHECK(std::abs(std::sqrt(variance(res)) - 0.3) < 3 * 0.3 / std::sqrt(2.0 * res.size()));
  CHECK(std::abs(mean(res)) < 3 * se_mean(res));
  double x1 = static_cast<double>(int1.size()) / n;
  CHECK(std::abs(x1 - 0.5) < 3 * 0.5 / std::sqrt(n));
}

TEST_CASE("default scenarios hit the event rate and visit targets") {
  for (const std::string name : {"linear", "quadratic", "spline"}) {
    const SimulatedDataset d = simulate_dataset(small(name, 2000, 6));
    CAPTURE(name);
    CHECK(d.event_rate >= 0.32);
    CHECK(d.event_rate <= 0.42);
    CHECK(d.mean_visits >= 13.0);
    CHECK(d.mean_visits <= 17.0);
    CHECK(d.data.subject_count() == 2000);
    for (const auto& r : d.longitudinal) CHECK(r.t <= d.survival[std::stoul(r.subject_id) - 1].time);
  }
}

TEST_CASE("permutation assigns every candidate time exactly once") {
  const ScenarioConfig c = small("spline", 3000, 7);
  std::mt19937_64 rng(7);
  const LongitudinalSimulation lon = simulate_longitudinal(c, rng);
  const PermutationOutput p = permutation_survival(lon.trajectories, c.true_f, c, rng);
  REQUIRE(p.records.size() == 3000);
  std::vector<std::pair<double, int>> assigned;
  for (std::size_t i = 0; i < p.records.size(); ++i) {
    CHECK(p.records[i].subject_id == std::to_string(i + 1));
    CHECK(p.records[i].time > 0.0);
    CHECK(p.records[i].time <= c.max_follow_up);
    assigned.emplace_back(p.records[i].time, p.records[i].event);
  }
  std::vector<std::pair<double, int>> pool;
  for (std::size_t k = 0; k < p.pool_times.size(); ++k) pool.emplace_back(p.pool_times[k], p.pool_events[k]);
  CHECK(std::is_sorted(p.pool_times.begin(), p.pool_times.end()));
  std::sort(assigned.begin(), assigned.end());
  std::sort(pool.begin(), pool.end());
  CHECK(assigned == pool);
}

TEST_CASE("null association leaves event times independent of the random intercept") {
  const int n = 10000;
  const ScenarioConfig c = small("linear", n, 8);
  std::mt19937_64 rng(8);
  ScenarioConfig slim = c;
  const LongitudinalSimulation lon = simulate_longitudinal(slim, rng);
  const PermutationOutput p = permutation_survival(lon.trajectories, [](double) { return 0.0; }, c, rng);
  std::vector<double> times;
  std::vector<double> b0;
  for (int i = 0; i < n; ++i) {
    times.push_back(p.records[i].time);
    b0.push_back(lon.trajectories[i].b0);
  }
  CHECK(std::abs(spearman(times, b0)) < 3.0 / std::sqrt(n));
  CHECK(std::abs(correlation(times, b0)) < 0.03);
  CHECK(p.event_rate >= 0.32);
  CHECK(p.event_rate <= 0.42);
}

TEST_CASE("a high trajectory fails earlier under a strongly positive association") {
  ScenarioConfig c = small("linear", 100, 9);
  c.pilot_size = 2000;
  const auto f = [](double nu) { return 1.5 * nu; };
  std::mt19937_64 rng(9);
  double high = 0.0;
  double low = 0.0;
  const int reps = 200;
  for (int r = 0; r < reps; ++r) {
    LongitudinalSimulation lon = simulate_longitudinal(c, rng);
    lon.trajectories[0].intercept = 2.5;
    lon.trajectories[0].slope = 0.3;
    lon.trajectories[1].intercept = -2.5;
    lon.trajectories[1].slope = 0.3;
    const PermutationOutput p = permutation_survival(lon.trajectories, f, c, rng);
    high += p.records[0].time;
    low += p.records[1].time;
  }
  CHECK(high / reps < low / reps);
}

TEST_CASE("replicate seeds are distinct and stable") {
  CHECK(replicate_seed(1, 0) == replicate_seed(1, 0));
  CHECK(replicate_seed(1, 0) != replicate_seed(1, 1));
  CHECK(replicate_seed(1, 0) != replicate_seed(2, 0));
}

TEST_CASE("one replicate reports point metrics with absent spreads") {
  ReplicationOptions o;
  o.levels = {AssociationLevel::Linear};
  o.fit.samples = 200;
  const ReplicationMetrics m = run_replications(small("linear", 300, 10), 1, o);
  REQUIRE_FALSE(m.parameters.empty());
  for (const auto& p : m.parameters) {
    CHECK(std::isfinite(p.bias));
    CHECK(std::isnan(p.sd_bias));
    CHECK(p.n == 1);
  }
  REQUIRE(m.levels.size() == 1);
  CHECK(m.levels[0].fits == 1);
  const Json j = metrics_to_json(m);
  CHECK(j.dump().find("NaN") == std::string::npos);
}

TEST_CASE("replication metrics are reproducible and independent of the thread count") {
  ReplicationOptions o;
  o.levels = {AssociationLevel::Linear, AssociationLevel::Quadratic};
  o.fit.samples = 200;
  const ScenarioConfig c = small("quadratic", 300, 11);
  const std::string a = metrics_to_json(run_replications(c, 2, o)).dump();
  const std::string b = metrics_to_json(run_replications(c, 2, o)).dump();
  o.threads = 2;
  const std::string t = metrics_to_json(run_replications(c, 2, o)).dump();
  CHECK(a == b);
  CHECK(a == t);
}

TEST_CASE("pointwise truths use the scenario association at the true percentiles") {
  ReplicationOptions o;
  o.levels = {AssociationLevel::Linear};
  o.fit.samples = 200;
  const ScenarioConfig c = small("quadratic", 300, 12);
  const ReplicateRecord r = run_replicate(c, 0, o);
  REQUIRE(r.fits.size() == 1);
  const LevelFitRecord& f = r.fits[0];
  REQUIRE(f.ok);
  REQUIRE(f.nu.size() == 5);
  for (std::size_t k = 0; k < 5; ++k) CHECK(f.truth[k] == doctest::Approx(f.nu[k] * f.nu[k] / 20.0).epsilon(1e-14));
  CHECK(std::is_sorted(f.nu.begin(), f.nu.end()));
  // P10 recomputed from the same replicate's data.
  ScenarioConfig rc = c;
  rc.seed = r.seed;
  const SimulatedDataset d = simulate_dataset(rc);
  const std::vector<double> truth = true_shared_values(d, 15);
  CHECK(f.nu[0] == doctest::Approx(quantile(truth, 0.10)).epsilon(1e-12));
}

TEST_CASE("pointwise metrics arithmetic") {
  LevelFitRecord a;
  a.ok = true;
  a.nu = {0.0, 1.0};
  a.truth = {0.0, 0.5};
  a.curve = {{0.0, 0.0, 0.0, 0.0}, {1.0, 0.6, 0.45, 0.7}};
  LevelFitRecord b = a;
  b.curve[1] = {1.0, 0.4, 0.3, 0.45};
  const auto m = pointwise_metrics({a, b}, {50, 90});
  REQUIRE(m.size() == 2);
  CHECK(m[0].bias == 0.0);
  CHECK(m[0].coverage == 1.0);
  CHECK(m[1].bias == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(m[1].sd == doctest::Approx(std::sqrt(0.02)));
  CHECK(m[1].coverage == 0.5);
  CHECK(m[1].n == 2);
}
