#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "jointfit/dataset.hpp"
#include "jointfit/fit.hpp"
#include "jointfit/spline_basis.hpp"

namespace jointfit {

struct ScenarioConfig {
  std::string name = "Linear";
  int N = 2000;
  double max_follow_up = 10.0;
  std::vector<double> true_beta{0.0, 0.3, 0.5, 0.2};
  double true_sigma_e = 0.3;
  std::vector<double> true_sigma_b{0.8, 0.3, 0.3};  // sigma_b0, sigma_b1, rho
  std::function<double(double)> true_f;
  double target_event_rate = 0.37;
  double visit_spacing = 0.5;
  double dropout_max = 60.0;   // uniform dropout U(0, dropout_max)
  int pilot_size = 20000;
  std::uint64_t seed = 1;

  /// Level of the data-generating association (reference in comparisons).
  AssociationLevel true_level() const;
  void validate() const;
};

/// Linear, Quadratic or Spline (case-insensitive; also 1, 2, 3).
ScenarioConfig scenario_defaults(const std::string& name);

/// Linear-in-time true trajectory eta_i(t) = intercept + slope t.
struct Trajectory {
  double intercept = 0.0;
  double slope = 0.0;
  double x = 0.0;
  double b0 = 0.0;
  double b1 = 0.0;
  double at(double t) const { return intercept + slope * t; }
};

struct LongitudinalSimulation {
  std::vector<LongitudinalRecord> records;  // full schedule on [0, max_follow_up]
  std::vector<Trajectory> trajectories;
};

LongitudinalSimulation simulate_longitudinal(const ScenarioConfig& config, std::mt19937_64& rng);
LongitudinalSimulation simulate_longitudinal(const ScenarioConfig& config);

/// Exponential rate giving the target event fraction on a pilot candidate
/// sample (bisection with common random numbers).
double tune_event_rate(const ScenarioConfig& config, std::mt19937_64& rng);

struct PermutationOutput {
  std::vector<SurvivalRecord> records;  // one per subject, subject order
  std::vector<double> pool_times;       // sorted candidate times
  std::vector<int> pool_events;
  double event_rate = 0.0;
  double hazard_rate = 0.0;
};

/// Permutation algorithm: assigns a sorted pool of candidate event and
/// censoring times to subjects by hazard-weighted risk-set sampling.
PermutationOutput permutation_survival(const std::vector<Trajectory>& trajectories,
                                       const std::function<double(double)>& true_f,
                                       const ScenarioConfig& config, std::mt19937_64& rng);

/// Drops measurements after each subject's survival time.
std::vector<LongitudinalRecord> truncate_longitudinal(const std::vector<LongitudinalRecord>& records,
                                                      const std::vector<SurvivalRecord>& survival);

struct SimulatedDataset {
  std::vector<LongitudinalRecord> longitudinal;
  std::vector<SurvivalRecord> survival;
  std::vector<Trajectory> trajectories;
  JointDataset data;
  double event_rate = 0.0;
  double mean_visits = 0.0;
};

SimulatedDataset simulate_dataset(const ScenarioConfig& config);

/// True shared component at the midpoint rows the fit evaluates.
std::vector<double> true_shared_values(const SimulatedDataset& sim, int baseline_intervals = 15);

struct ReplicationOptions {
  std::vector<AssociationLevel> levels{AssociationLevel::Linear};
  int threads = 1;
  FitOptions fit;
  std::optional<AssociationLevel> reference;  // defaults to the true level
  std::vector<double> percentiles{10, 25, 50, 75, 90};
  bool keep_raw = false;
};

struct ParameterMetric {
  AssociationLevel level = AssociationLevel::Linear;
  std::string name;
  double truth = 0.0;
  double bias = 0.0;
  double sd_bias = 0.0;  // NaN with fewer than two fits
  double coverage = 0.0;
  int n = 0;
};

struct CriterionMetric {
  AssociationLevel level = AssociationLevel::Linear;
  AssociationLevel reference = AssociationLevel::Linear;
  double delta_dic_mean = 0.0;
  double delta_dic_sd = 0.0;
  double delta_waic_mean = 0.0;
  double delta_waic_sd = 0.0;
  int n = 0;
};

struct PairMetric {
  AssociationLevel a = AssociationLevel::Linear;
  AssociationLevel b = AssociationLevel::Linear;
  double nonsig_rate = 0.0;  // fraction with p > 0.05
  double mean_z = 0.0;
  int n = 0;
};

struct PointwiseMetric {
  AssociationLevel level = AssociationLevel::Linear;
  double percentile = 0.0;
  double nu_mean = 0.0;
  double truth_mean = 0.0;
  double bias = 0.0;
  double sd = 0.0;
  double coverage = 0.0;
  int n = 0;
};

struct LevelFitRecord {
  AssociationLevel level = AssociationLevel::Linear;
  bool ok = false;
  bool converged = false;
  std::string error;
  double cpu_seconds = 0.0;
  double dic = 0.0;
  double waic = 0.0;
  std::vector<ParameterSummary> parameters;
  std::vector<double> nu;     // true-nu percentile values
  std::vector<double> truth;  // f at those values
  std::vector<CurvePoint> curve;
};

struct PairTestRecord {
  AssociationLevel a = AssociationLevel::Linear;
  AssociationLevel b = AssociationLevel::Linear;
  double delta = 0.0;
  double z = 0.0;
  double p = 1.0;
};

struct ReplicateRecord {
  int replicate = 0;
  std::uint64_t seed = 0;
  double event_rate = 0.0;
  double mean_visits = 0.0;
  std::vector<LevelFitRecord> fits;
  std::vector<PairTestRecord> tests;
};

struct LevelSummary {
  AssociationLevel level = AssociationLevel::Linear;
  int fits = 0;
  int failures = 0;
  int nonconverged = 0;
  double mean_cpu_seconds = 0.0;
};

struct FitFailure {
  int replicate = 0;
  AssociationLevel level = AssociationLevel::Linear;
  std::string error;
};

struct ReplicationMetrics {
  std::string scenario;
  int N = 0;
  int nsim = 0;
  std::uint64_t seed = 0;
  AssociationLevel reference = AssociationLevel::Linear;
  double mean_event_rate = 0.0;
  double mean_visits = 0.0;
  std::vector<LevelSummary> levels;
  std::vector<ParameterMetric> parameters;
  std::vector<CriterionMetric> criteria;
  std::vector<PairMetric> pairs;
  std::vector<PointwiseMetric> pointwise;
  std::vector<FitFailure> failures;
  std::vector<ReplicateRecord> replicates;  // raw records, kept when requested
};

/// Per-replicate seed derived from the master seed.
std::uint64_t replicate_seed(std::uint64_t master, int replicate);

/// Truths for the fitted parameter names of a scenario.
std::vector<std::pair<std::string, double>> scenario_truths(const ScenarioConfig& config);

ReplicateRecord run_replicate(const ScenarioConfig& config, int replicate,
                              const ReplicationOptions& options);

ReplicationMetrics aggregate_replications(const ScenarioConfig& config,
                                          std::vector<ReplicateRecord> records,
                                          const ReplicationOptions& options);

ReplicationMetrics run_replications(const ScenarioConfig& config, int nsim,
                                    const ReplicationOptions& options);

/// Bias, SD and coverage of f-hat at the true-nu percentiles for one level.
std::vector<PointwiseMetric> pointwise_metrics(const std::vector<LevelFitRecord>& fits,
                                               const std::vector<double>& percentiles);

}  // namespace jointfit
