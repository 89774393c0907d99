#pragma once

#include <Eigen/Dense>

#include <vector>

#include "jointfit/joint_model.hpp"
#include "jointfit/laplace.hpp"

namespace jointfit {

struct OuterOptions {
  double gradient_step = 1e-4;   // relative central-difference step
  double hessian_step = 1e-3;    // relative step for the mode Hessian
  double tolerance = 1e-6;       // objective change
  int max_iterations = 500;
  double max_step = 1.0;         // max-norm cap on a quasi-Newton step
  double eigen_floor = 1e-8;
  NewtonOptions newton;
};

struct OuterIterate {
  int iteration = 0;
  double objective = 0.0;
  double gradient_norm = 0.0;
  Eigen::VectorXd theta;
};

struct HyperOptimum {
  Eigen::VectorXd theta;
  Eigen::MatrixXd covariance;  // inverse negative Hessian, eigenvalue-floored
  Eigen::MatrixXd hessian;     // finite-difference Hessian of the objective
  double objective = 0.0;
  double initial_objective = 0.0;
  double gradient_norm = 0.0;  // max-norm of the (pseudo-)gradient at the mode
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  GaussianApproximation latent;  // latent approximation at the mode
  std::vector<OuterIterate> trace;
};

/// Indices of hyperparameters carrying the Laplace (L1) prior.
std::vector<int> laplace_indices(const JointModel& model);

/// Central finite-difference gradient of the Laplace objective with
/// relative step h (1 + |theta_i|), warm-started from `base_mode`.
Eigen::VectorXd objective_gradient(const JointModel& model, const Eigen::VectorXd& theta,
                                   const Eigen::VectorXd& base_mode, double relative_step,
                                   const NewtonOptions& newton = {});

/// Symmetric-positive-definite inverse with eigenvalues floored at `floor`.
Eigen::MatrixXd spd_inverse(const Eigen::MatrixXd& precision, double floor);

/// Quasi-Newton maximization of the Laplace-approximated log marginal
/// posterior. Coordinates with a Laplace prior are handled orthant-wise so
/// they can settle at exactly zero. Never throws on non-convergence: the
/// result carries `converged = false` and the iteration trace.
HyperOptimum optimize_hyperparameters(const JointModel& model, const Eigen::VectorXd& init,
                                      const OuterOptions& options = {},
                                      const Eigen::VectorXd* latent_start = nullptr);

}  // namespace jointfit
