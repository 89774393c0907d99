#pragma once

#include <Eigen/Dense>

#include <vector>

#include "jointfit/block_arrow.hpp"
#include "jointfit/joint_model.hpp"

namespace jointfit {

struct NewtonOptions {
  double gradient_tolerance = 1e-6;
  int max_iterations = 50;
  int max_halvings = 10;
  bool polish = true;
};

/// Gaussian approximation of the latent field at fixed theta.
struct GaussianApproximation {
  Eigen::VectorXd mode;
  BlockArrowMatrix precision;  // negative Hessian at the mode
  ArrowCholesky factor;
  double log_density = 0.0;    // joint log-density at the mode
  int iterations = 0;
  double gradient_norm = 0.0;  // max-norm at the returned mode
  std::vector<double> trace;   // objective after each accepted step
};

/// Newton maximization of the joint log-density over the latent field.
/// Starts from `start` when given, otherwise from zero. Throws
/// ConvergenceError carrying the last gradient max-norm.
GaussianApproximation gaussian_approximation(const JointModel& model, const Eigen::VectorXd& theta,
                                             const Eigen::VectorXd* start = nullptr,
                                             const NewtonOptions& options = {});

/// Laplace value log pi(theta) + log p(y, u*) - 1/2 log det H + dim/2 log 2 pi
/// for an existing approximation.
double laplace_value(const JointModel& model, const Eigen::VectorXd& theta,
                     const GaussianApproximation& approx);

/// Laplace approximation of log pi(theta | y), up to a theta-free constant.
double log_marginal_posterior(const JointModel& model, const Eigen::VectorXd& theta,
                              const Eigen::VectorXd* start = nullptr,
                              GaussianApproximation* approx_out = nullptr,
                              const NewtonOptions& options = {});

}  // namespace jointfit
