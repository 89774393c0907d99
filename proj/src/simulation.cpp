#include "jointfit/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <ctime>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <thread>

#include "jointfit/error.hpp"
#include "jointfit/expansion.hpp"
#include "jointfit/model_compare.hpp"
#include "jointfit/stats.hpp"

namespace jointfit {

namespace {

std::string lower(std::string s) {
  for (auto& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return s;
}

double thread_cpu_seconds() {
  timespec ts{};
  clock_gettime(CLOCK_THREAD_CPUTIME_ID, &ts);
  return static_cast<double>(ts.tv_sec) + 1e-9 * static_cast<double>(ts.tv_nsec);
}

double uniform01(std::mt19937_64& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

double standard_exponential(std::mt19937_64& rng) { return -std::log1p(-uniform01(rng)); }

double censoring_time(const ScenarioConfig& c, std::mt19937_64& rng) {
  return std::min(c.dropout_max * uniform01(rng), c.max_follow_up);
}

double nan() { return std::numeric_limits<double>::quiet_NaN(); }

double sd_or_nan(const std::vector<double>& v) {
  return v.size() < 2 ? nan() : std::sqrt(variance(v));
}

}  // namespace

AssociationLevel ScenarioConfig::true_level() const {
  const std::string n = lower(name);
  if (n == "quadratic") return AssociationLevel::Quadratic;
  if (n == "spline") return AssociationLevel::Spline;
  return AssociationLevel::Linear;
}

void ScenarioConfig::validate() const {
  if (N < 1) throw ConfigError("scenario N must be positive");
  if (true_beta.size() != 4) throw ConfigError("scenario true_beta needs 4 values");
  if (true_sigma_b.size() != 3) throw ConfigError("scenario true_sigma_b needs (sigma_b0, sigma_b1, rho)");
  if (!(true_sigma_e >= 0.0)) throw ConfigError("scenario true_sigma_e must be non-negative");
  if (!(true_sigma_b[0] > 0.0 && true_sigma_b[1] > 0.0)) {
    throw ConfigError("scenario random-effect dispersions must be positive");
  }
  if (!(std::abs(true_sigma_b[2]) < 1.0)) throw ConfigError("scenario rho must lie in (-1, 1)");
  if (!(max_follow_up > 0.0)) throw ConfigError("scenario max_follow_up must be positive");
  if (!(visit_spacing > 0.0)) throw ConfigError("scenario visit_spacing must be positive");
  if (!(target_event_rate > 0.0 && target_event_rate < 1.0)) {
    throw ConfigError("scenario target_event_rate must lie in (0, 1)");
  }
  if (!(dropout_max > 0.0)) throw ConfigError("scenario dropout_max must be positive");
  if (pilot_size < 10) throw ConfigError("scenario pilot_size must be at least 10");
  if (!true_f) throw ConfigError("scenario has no association function");
}

ScenarioConfig scenario_defaults(const std::string& name) {
  const std::string n = lower(name);
  ScenarioConfig c;
  if (n == "linear" || n == "1") {
    c.name = "Linear";
    c.true_f = [](double nu) { return 0.5 * nu; };
  } else if (n == "quadratic" || n == "2") {
    c.name = "Quadratic";
    c.true_beta[0] = 0.0;
    c.true_sigma_b = {2.0, 0.4, 0.2};
    c.true_f = [](double nu) { return nu * nu / 20.0; };
  } else if (n == "spline" || n == "3") {
    c.name = "Spline";
    c.true_beta[0] = -1.5;
    c.true_sigma_b = {0.8, 0.3, 0.3};
    c.true_f = [](double nu) { return nu * std::pow(std::log(nu * nu + 1.0), 1.5) / 8.0; };
  } else {
    throw ConfigError("unknown scenario '" + name + "' (expected linear, quadratic or spline)");
  }
  return c;
}

LongitudinalSimulation simulate_longitudinal(const ScenarioConfig& c, std::mt19937_64& rng) {
  c.validate();
  LongitudinalSimulation out;
  const double s0 = c.true_sigma_b[0];
  const double s1 = c.true_sigma_b[1];
  const double rho = c.true_sigma_b[2];
  const auto& beta = c.true_beta;
  std::normal_distribution<double> normal(0.0, 1.0);
  out.trajectories.resize(static_cast<std::size_t>(c.N));
  const int visits = static_cast<int>(std::floor(c.max_follow_up / c.visit_spacing + 1e-9)) + 1;
  for (int i = 0; i < c.N; ++i) {
    Trajectory tr;
    tr.x = uniform01(rng) < 0.5 ? 1.0 : 0.0;
    const double z0 = normal(rng);
    const double z1 = normal(rng);
    tr.b0 = s0 * z0;
    tr.b1 = s1 * (rho * z0 + std::sqrt(1.0 - rho * rho) * z1);
    tr.intercept = beta[0] + tr.b0 + beta[2] * tr.x;
    tr.slope = beta[1] + tr.b1 + beta[3] * tr.x;
    out.trajectories[static_cast<std::size_t>(i)] = tr;
    const std::string id = std::to_string(i + 1);
    for (int v = 0; v < visits; ++v) {
      const double t = v * c.visit_spacing;
      const double y = tr.at(t) + c.true_sigma_e * normal(rng);
      out.records.push_back({id, t, y, {{"X", tr.x}}});
    }
  }
  return out;
}

LongitudinalSimulation simulate_longitudinal(const ScenarioConfig& config) {
  std::mt19937_64 rng(config.seed);
  return simulate_longitudinal(config, rng);
}

double tune_event_rate(const ScenarioConfig& c, std::mt19937_64& rng) {
  // An exponential event at rate r precedes censoring C iff r >= E / C.
  std::vector<double> ratio(static_cast<std::size_t>(c.pilot_size));
  for (auto& r : ratio) {
    const double e = standard_exponential(rng);
    const double cens = censoring_time(c, rng);
    r = cens > 0.0 ? e / cens : std::numeric_limits<double>::infinity();
  }
  auto fraction = [&](double rate) {
    std::size_t k = 0;
    for (double r : ratio) k += r <= rate ? 1 : 0;
    return static_cast<double>(k) / static_cast<double>(ratio.size());
  };
  double lo = 0.0;
  double hi = 1.0;
  while (fraction(hi) < c.target_event_rate && hi < 1e6) hi *= 2.0;
  for (int it = 0; it < 100; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (fraction(mid) < c.target_event_rate) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

PermutationOutput permutation_survival(const std::vector<Trajectory>& trajectories,
                                       const std::function<double(double)>& true_f,
                                       const ScenarioConfig& c, std::mt19937_64& rng) {
  PermutationOutput out;
  const std::size_t n = trajectories.size();
  out.hazard_rate = tune_event_rate(c, rng);

  std::vector<std::pair<double, int>> pool(n);
  for (auto& p : pool) {
    const double e = standard_exponential(rng) / out.hazard_rate;
    const double cens = censoring_time(c, rng);
    p = e <= cens ? std::make_pair(e, 1) : std::make_pair(cens, 0);
    // Zero-length follow-up is not admissible; nudge onto the first instant.
    if (p.first <= 0.0) p.first = std::numeric_limits<double>::min();
  }
  std::stable_sort(pool.begin(), pool.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });

  out.records.resize(n);
  std::vector<int> alive(n);
  std::iota(alive.begin(), alive.end(), 0);
  std::vector<double> logw;
  std::size_t events = 0;
  for (const auto& [t, event] : pool) {
    if (alive.empty()) throw Error("permutation algorithm exhausted the risk set");
    std::size_t pick = 0;
    if (event == 1) {
      logw.resize(alive.size());
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < alive.size(); ++k) {
        logw[k] = true_f(trajectories[static_cast<std::size_t>(alive[k])].at(t));
        mx = std::max(mx, logw[k]);
      }
      double total = 0.0;
      for (double& w : logw) {
        w = std::exp(w - mx);
        total += w;
      }
      const double target = uniform01(rng) * total;
      double cum = 0.0;
      pick = alive.size() - 1;
      for (std::size_t k = 0; k < alive.size(); ++k) {
        cum += logw[k];
        if (target < cum) {
          pick = k;
          break;
        }
      }
      ++events;
    } else {
      pick = std::min(alive.size() - 1,
                      static_cast<std::size_t>(uniform01(rng) * static_cast<double>(alive.size())));
    }
    const int subject = alive[pick];
    alive.erase(alive.begin() + static_cast<std::ptrdiff_t>(pick));
    const auto& tr = trajectories[static_cast<std::size_t>(subject)];
    out.records[static_cast<std::size_t>(subject)] = {std::to_string(subject + 1), t, event, {{"X", tr.x}}};
    out.pool_times.push_back(t);
    out.pool_events.push_back(event);
  }
  out.event_rate = n > 0 ? static_cast<double>(events) / static_cast<double>(n) : 0.0;
  return out;
}

std::vector<LongitudinalRecord> truncate_longitudinal(const std::vector<LongitudinalRecord>& records,
                                                      const std::vector<SurvivalRecord>& survival) {
  std::map<std::string, double> end;
  for (const auto& s : survival) end[s.subject_id] = s.time;
  std::vector<LongitudinalRecord> out;
  for (const auto& r : records) {
    const auto it = end.find(r.subject_id);
    if (it != end.end() && r.t <= it->second) out.push_back(r);
  }
  return out;
}

SimulatedDataset simulate_dataset(const ScenarioConfig& config) {
  std::mt19937_64 rng(config.seed);
  LongitudinalSimulation lon = simulate_longitudinal(config, rng);
  PermutationOutput surv = permutation_survival(lon.trajectories, config.true_f, config, rng);
  SimulatedDataset sim;
  sim.longitudinal = truncate_longitudinal(lon.records, surv.records);
  sim.survival = std::move(surv.records);
  sim.trajectories = std::move(lon.trajectories);
  sim.event_rate = surv.event_rate;
  sim.mean_visits =
      static_cast<double>(sim.longitudinal.size()) / static_cast<double>(std::max(config.N, 1));
  sim.data = validate_and_join(sim.longitudinal, sim.survival);
  return sim;
}

std::vector<double> true_shared_values(const SimulatedDataset& sim, int baseline_intervals) {
  const ExpandedSurvival ex =
      expand_survival(sim.data.survival(), baseline_intervals, EvaluationPoint::Midpoint);
  std::vector<double> nu;
  nu.reserve(ex.rows.size());
  for (const auto& row : ex.rows) {
    const std::string& id = sim.data.survival()[static_cast<std::size_t>(row.subject)].subject_id;
    const auto idx = static_cast<std::size_t>(std::stoi(id) - 1);
    nu.push_back(sim.trajectories.at(idx).at(row.t_mid));
  }
  return nu;
}

std::uint64_t replicate_seed(std::uint64_t master, int replicate) {
  return derive_seed(master, static_cast<std::uint64_t>(replicate));
}

std::vector<std::pair<std::string, double>> scenario_truths(const ScenarioConfig& c) {
  std::vector<std::pair<std::string, double>> t{
      {"beta_intercept", c.true_beta[0]}, {"beta_time", c.true_beta[1]},
      {"beta_X", c.true_beta[2]},         {"beta_X:time", c.true_beta[3]},
      {"sigma_e", c.true_sigma_e},        {"sigma_b0", c.true_sigma_b[0]},
      {"sigma_b1", c.true_sigma_b[1]},    {"rho_b", c.true_sigma_b[2]}};
  if (c.true_level() == AssociationLevel::Linear) {
    // f = 0.5 nu at every level: constant scaling with no slope or deviations.
    t.emplace_back("gamma1", 0.5);
  }
  return t;
}

ReplicateRecord run_replicate(const ScenarioConfig& config, int replicate,
                              const ReplicationOptions& options) {
  ScenarioConfig cfg = config;
  cfg.seed = replicate_seed(config.seed, replicate);
  ReplicateRecord rec;
  rec.replicate = replicate;
  rec.seed = cfg.seed;
  const SimulatedDataset sim = simulate_dataset(cfg);
  rec.event_rate = sim.event_rate;
  rec.mean_visits = sim.mean_visits;

  std::vector<double> true_nu = true_shared_values(sim);
  std::sort(true_nu.begin(), true_nu.end());
  std::vector<double> nu_p;
  for (double p : options.percentiles) nu_p.push_back(quantile_sorted(true_nu, p / 100.0));

  std::vector<PointwiseCriteria> crit(options.levels.size());
  for (std::size_t l = 0; l < options.levels.size(); ++l) {
    LevelFitRecord fr;
    fr.level = options.levels[l];
    fr.nu = nu_p;
    for (double v : nu_p) fr.truth.push_back(cfg.true_f(v));
    const double c0 = thread_cpu_seconds();
    try {
      FitOptions fo = options.fit;
      fo.seed = derive_seed(cfg.seed, 0x100 + static_cast<std::uint64_t>(fr.level));
      FitResult res = fit(sim.data, simulation_spec(fr.level), fo);
      fr.ok = true;
      fr.converged = res.converged;
      fr.dic = res.criteria.dic;
      fr.waic = res.criteria.waic;
      fr.parameters = res.parameters;
      try {
        fr.curve = posterior_curve(res, 0, nu_p);
      } catch (const DomainError&) {
        fr.curve.clear();
      }
      crit[l] = std::move(res.criteria);
    } catch (const Error& e) {
      fr.ok = false;
      fr.error = e.what();
    }
    fr.cpu_seconds = thread_cpu_seconds() - c0;
    rec.fits.push_back(std::move(fr));
  }
  for (std::size_t a = 0; a < options.levels.size(); ++a) {
    for (std::size_t b = a + 1; b < options.levels.size(); ++b) {
      if (!rec.fits[a].ok || !rec.fits[b].ok) continue;
      const PairwiseWaicResult t = pairwise_waic_test(crit[a], crit[b]);
      rec.tests.push_back({options.levels[a], options.levels[b], t.delta, t.z, t.p});
    }
  }
  return rec;
}

std::vector<PointwiseMetric> pointwise_metrics(const std::vector<LevelFitRecord>& fits,
                                               const std::vector<double>& percentiles) {
  std::vector<PointwiseMetric> out;
  if (fits.empty()) return out;
  for (std::size_t k = 0; k < percentiles.size(); ++k) {
    PointwiseMetric m;
    m.level = fits.front().level;
    m.percentile = percentiles[k];
    std::vector<double> bias;
    double covered = 0.0;
    double nu_sum = 0.0;
    double truth_sum = 0.0;
    for (const auto& f : fits) {
      if (!f.ok || f.curve.size() != percentiles.size()) continue;
      const CurvePoint& p = f.curve[k];
      bias.push_back(p.f_mean - f.truth[k]);
      covered += (f.truth[k] >= p.f_lo && f.truth[k] <= p.f_hi) ? 1.0 : 0.0;
      nu_sum += f.nu[k];
      truth_sum += f.truth[k];
    }
    m.n = static_cast<int>(bias.size());
    if (m.n > 0) {
      m.bias = mean(bias);
      m.sd = sd_or_nan(bias);
      m.coverage = covered / m.n;
      m.nu_mean = nu_sum / m.n;
      m.truth_mean = truth_sum / m.n;
    } else {
      m.bias = m.sd = m.coverage = m.nu_mean = m.truth_mean = nan();
    }
    out.push_back(m);
  }
  return out;
}

ReplicationMetrics aggregate_replications(const ScenarioConfig& config,
                                          std::vector<ReplicateRecord> records,
                                          const ReplicationOptions& options) {
  std::sort(records.begin(), records.end(),
            [](const auto& a, const auto& b) { return a.replicate < b.replicate; });
  ReplicationMetrics m;
  m.scenario = config.name;
  m.N = config.N;
  m.nsim = static_cast<int>(records.size());
  m.seed = config.seed;
  m.reference = options.reference.value_or(config.true_level());
  std::vector<double> rates;
  std::vector<double> visits;
  for (const auto& r : records) {
    rates.push_back(r.event_rate);
    visits.push_back(r.mean_visits);
  }
  m.mean_event_rate = rates.empty() ? nan() : mean(rates);
  m.mean_visits = visits.empty() ? nan() : mean(visits);

  const auto truths = scenario_truths(config);
  int total_ok = 0;
  for (std::size_t l = 0; l < options.levels.size(); ++l) {
    const AssociationLevel level = options.levels[l];
    LevelSummary ls;
    ls.level = level;
    std::vector<double> cpu;
    std::vector<LevelFitRecord> level_fits;
    for (const auto& r : records) {
      const auto& f = r.fits[l];
      if (f.ok) {
        ++ls.fits;
        if (!f.converged) ++ls.nonconverged;
        cpu.push_back(f.cpu_seconds);
        level_fits.push_back(f);
      } else {
        ++ls.failures;
      }
    }
    total_ok += ls.fits;
    ls.mean_cpu_seconds = cpu.empty() ? nan() : mean(cpu);
    m.levels.push_back(ls);

    for (const auto& [name, truth] : truths) {
      ParameterMetric pm;
      pm.level = level;
      pm.name = name;
      pm.truth = truth;
      std::vector<double> bias;
      double covered = 0.0;
      for (const auto& f : level_fits) {
        for (const auto& p : f.parameters) {
          if (p.name != name) continue;
          bias.push_back(p.mean - truth);
          covered += (truth >= p.q025 && truth <= p.q975) ? 1.0 : 0.0;
        }
      }
      pm.n = static_cast<int>(bias.size());
      if (pm.n == 0) continue;
      pm.bias = mean(bias);
      pm.sd_bias = sd_or_nan(bias);
      pm.coverage = covered / pm.n;
      m.parameters.push_back(pm);
    }

    const auto pw = pointwise_metrics(level_fits, options.percentiles);
    m.pointwise.insert(m.pointwise.end(), pw.begin(), pw.end());
  }
  if (total_ok == 0 && !records.empty() && !options.levels.empty()) {
    throw Error("all replicate fits failed");
  }

  // Information criteria relative to the reference level.
  const auto ref_it = std::find(options.levels.begin(), options.levels.end(), m.reference);
  if (ref_it != options.levels.end()) {
    const auto ref = static_cast<std::size_t>(ref_it - options.levels.begin());
    for (std::size_t l = 0; l < options.levels.size(); ++l) {
      if (l == ref) continue;
      CriterionMetric cm;
      cm.level = options.levels[l];
      cm.reference = m.reference;
      std::vector<double> ddic;
      std::vector<double> dwaic;
      for (const auto& r : records) {
        if (!r.fits[l].ok || !r.fits[ref].ok) continue;
        ddic.push_back(r.fits[l].dic - r.fits[ref].dic);
        dwaic.push_back(r.fits[l].waic - r.fits[ref].waic);
      }
      cm.n = static_cast<int>(ddic.size());
      cm.delta_dic_mean = ddic.empty() ? nan() : mean(ddic);
      cm.delta_dic_sd = sd_or_nan(ddic);
      cm.delta_waic_mean = dwaic.empty() ? nan() : mean(dwaic);
      cm.delta_waic_sd = sd_or_nan(dwaic);
      m.criteria.push_back(cm);
    }
  }

  for (std::size_t a = 0; a < options.levels.size(); ++a) {
    for (std::size_t b = a + 1; b < options.levels.size(); ++b) {
      PairMetric pm;
      pm.a = options.levels[a];
      pm.b = options.levels[b];
      double nonsig = 0.0;
      double zsum = 0.0;
      for (const auto& r : records) {
        for (const auto& t : r.tests) {
          if (t.a != pm.a || t.b != pm.b) continue;
          ++pm.n;
          nonsig += t.p > 0.05 ? 1.0 : 0.0;
          zsum += t.z;
        }
      }
      pm.nonsig_rate = pm.n > 0 ? nonsig / pm.n : nan();
      pm.mean_z = pm.n > 0 ? zsum / pm.n : nan();
      m.pairs.push_back(pm);
    }
  }
  for (const auto& r : records) {
    for (const auto& f : r.fits) {
      if (!f.ok) m.failures.push_back({r.replicate, f.level, f.error});
    }
  }
  if (options.keep_raw) m.replicates = std::move(records);
  return m;
}

ReplicationMetrics run_replications(const ScenarioConfig& config, int nsim,
                                    const ReplicationOptions& options) {
  config.validate();
  if (nsim < 1) throw ConfigError("nsim must be at least 1");
  if (options.levels.empty()) throw ConfigError("replication study needs at least one level");
  std::vector<ReplicateRecord> records(static_cast<std::size_t>(nsim));
  std::atomic<int> next{0};
  std::mutex error_mutex;
  std::string first_error;
  auto worker = [&]() {
    for (int r = next++; r < nsim; r = next++) {
      try {
        records[static_cast<std::size_t>(r)] = run_replicate(config, r, options);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (first_error.empty()) first_error = e.what();
      }
    }
  };
  const int threads = std::clamp(options.threads, 1, nsim);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (!first_error.empty()) throw Error("replicate data generation failed: " + first_error);
  return aggregate_replications(config, std::move(records), options);
}

}  // namespace jointfit
