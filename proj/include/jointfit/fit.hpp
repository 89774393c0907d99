#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "jointfit/dataset.hpp"
#include "jointfit/joint_model.hpp"
#include "jointfit/model_compare.hpp"
#include "jointfit/model_spec.hpp"
#include "jointfit/optimize.hpp"

namespace jointfit {

struct FitOptions {
  std::uint64_t seed = 1;
  int samples = 1000;
  OuterOptions outer;
};

struct ParameterSummary {
  std::string name;
  double mode = 0.0;
  double mean = 0.0;
  double sd = 0.0;
  double q025 = 0.0;
  double q975 = 0.0;
};

struct SharedComponentSummary {
  std::vector<double> percent{10, 25, 50, 75, 90};
  std::vector<double> percentiles;
  std::vector<double> bin_edges;  // 51 edges
  std::vector<double> bin_counts; // 50 counts
};

struct FitResult {
  ModelSpec spec;
  Calibration calibration;
  std::uint64_t seed = 0;
  int samples = 0;
  std::string fingerprint;
  std::size_t n_subjects = 0;
  std::size_t n_longitudinal = 0;
  std::size_t n_survival_rows = 0;

  Eigen::VectorXd latent_mode;
  Eigen::VectorXd latent_sd;
  std::vector<std::string> hyper_names;
  Eigen::VectorXd hyper_mode;
  Eigen::MatrixXd hyper_cov;
  std::vector<ParameterSummary> parameters;

  PointwiseCriteria criteria;

  bool converged = false;
  int iterations = 0;
  int evaluations = 0;
  int inner_iterations = 0;
  double objective = 0.0;
  double initial_objective = 0.0;
  double gradient_norm = 0.0;
  double wall_seconds = 0.0;

  const ParameterSummary* parameter(const std::string& name) const;
  /// gamma_c at the hyperparameter mode.
  AssociationCoefficients association_mode(int component) const;
  /// Basis of a component, rebuilt from the stored calibration (null for Level 1).
  std::optional<AssociationBasis> basis(int component) const;
};

struct CalibrationResult {
  Calibration calibration;
  HyperOptimum preliminary;
  ModelSpec preliminary_spec;
};

/// Level-1 preliminary fit, nu-tilde per expanded row at its latent mode,
/// domains, knots and bases.
CalibrationResult calibrate_detailed(const JointDataset& data, const ModelSpec& spec,
                                     const FitOptions& options = {});
Calibration calibrate(const JointDataset& data, const ModelSpec& spec,
                      const FitOptions& options = {});

/// Calibration built from the shared components at a latent vector.
Calibration calibration_from_latent(const JointModel& linear_model, const ModelSpec& spec,
                                    const Eigen::VectorXd& latent);

FitResult fit(const JointDataset& data, const ModelSpec& spec, const FitOptions& options = {});

struct CurvePoint {
  double nu = 0.0;
  double f_mean = 0.0;
  double f_lo = 0.0;
  double f_hi = 0.0;
};

/// f(nu) under `draws` gamma draws from the Gaussian hyperparameter
/// posterior; grid must lie within 20% of the domain width beyond it.
std::vector<CurvePoint> posterior_curve(const FitResult& fit, int component,
                                        const std::vector<double>& grid, int draws = 1000);

/// Equally spaced grid over the calibration domain.
std::vector<double> default_curve_grid(const FitResult& fit, int component, int points = 201);

SharedComponentSummary shared_component_summary(const FitResult& fit, int component);
SharedComponentSummary summarize_values(std::vector<double> values, int bins = 50);

}  // namespace jointfit
