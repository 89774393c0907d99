#include "jointfit/laplace.hpp"

#include <cmath>
#include <limits>

#include "jointfit/error.hpp"
#include "jointfit/stats.hpp"

namespace jointfit {

namespace {

double safe_log_density(const JointModel& model, const Eigen::VectorXd& u,
                        const Eigen::VectorXd& theta) {
  try {
    return model.log_density(u, theta);
  } catch (const EvaluationError&) {
    return -std::numeric_limits<double>::infinity();
  }
}

// Cholesky of H, adding Levenberg damping to the diagonal until it succeeds.
ArrowCholesky damped_factor(BlockArrowMatrix h) {
  ArrowCholesky f(h);
  if (f.ok()) return f;
  double scale = 0.0;
  for (int i = 0; i < h.blocks(); ++i) scale = std::max(scale, h.local(i).diagonal().cwiseAbs().maxCoeff());
  if (h.global_dim() > 0) scale = std::max(scale, h.global().diagonal().cwiseAbs().maxCoeff());
  double damp = 1e-8 * std::max(scale, 1.0);
  for (int attempt = 0; attempt < 30; ++attempt) {
    BlockArrowMatrix d = h;
    for (int i = 0; i < d.blocks(); ++i) d.local(i).diagonal().array() += damp;
    d.global().diagonal().array() += damp;
    ArrowCholesky fd(d);
    if (fd.ok()) return fd;
    damp *= 10.0;
  }
  throw ConvergenceError("negative Hessian of the latent field could not be made positive definite",
                         std::numeric_limits<double>::infinity());
}

}  // namespace

GaussianApproximation gaussian_approximation(const JointModel& model, const Eigen::VectorXd& theta,
                                             const Eigen::VectorXd* start,
                                             const NewtonOptions& options) {
  const int dim = model.layout().dim();
  GaussianApproximation out;
  out.mode = start != nullptr && start->size() == dim ? *start : Eigen::VectorXd::Zero(dim);
  double f = model.log_density(out.mode, theta);
  out.trace.push_back(f);

  Eigen::VectorXd g = model.gradient(out.mode, theta);
  double gnorm = g.cwiseAbs().maxCoeff();

  // One Newton step with step halving; returns false when no halving is accepted.
  auto newton_step = [&](Eigen::VectorXd& trial, double& f_trial) {
    const ArrowCholesky chol = damped_factor(model.negative_hessian(out.mode, theta));
    const Eigen::VectorXd step = chol.solve(g);
    double alpha = 1.0;
    for (int h = 0; h <= options.max_halvings; ++h) {
      trial = out.mode + alpha * step;
      f_trial = safe_log_density(model, trial, theta);
      if (f_trial >= f - 1e-12 * (1.0 + std::abs(f))) return true;
      alpha *= 0.5;
    }
    return false;
  };

  Eigen::VectorXd trial;
  double f_trial = 0.0;
  while (gnorm >= options.gradient_tolerance) {
    if (out.iterations >= options.max_iterations) {
      throw ConvergenceError("Newton iterations did not converge in " +
                                 std::to_string(options.max_iterations) + " iterations",
                             gnorm);
    }
    if (!newton_step(trial, f_trial)) {
      throw ConvergenceError("Newton line search failed after " +
                                 std::to_string(options.max_halvings) + " step halvings",
                             gnorm);
    }
    out.mode = trial;
    f = f_trial;
    out.trace.push_back(f);
    ++out.iterations;
    g = model.gradient(out.mode, theta);
    gnorm = g.cwiseAbs().maxCoeff();
  }
  if (options.polish && gnorm > 0.0 && newton_step(trial, f_trial)) {
    Eigen::VectorXd g_trial = model.gradient(trial, theta);
    const double n_trial = g_trial.cwiseAbs().maxCoeff();
    if (n_trial <= gnorm) {
      out.mode = trial;
      f = f_trial;
      g = std::move(g_trial);
      gnorm = n_trial;
    }
  }
  out.log_density = f;
  out.gradient_norm = gnorm;
  out.precision = model.negative_hessian(out.mode, theta);
  out.factor = ArrowCholesky(out.precision);
  if (!out.factor.ok()) {
    throw ConvergenceError("negative Hessian at the latent mode is not positive definite", gnorm);
  }
  return out;
}

double laplace_value(const JointModel& model, const Eigen::VectorXd& theta,
                     const GaussianApproximation& approx) {
  const double dim = static_cast<double>(approx.mode.size());
  return model.log_hyperprior(theta) + approx.log_density - 0.5 * approx.factor.log_determinant() +
         0.5 * dim * kLog2Pi;
}

double log_marginal_posterior(const JointModel& model, const Eigen::VectorXd& theta,
                              const Eigen::VectorXd* start, GaussianApproximation* approx_out,
                              const NewtonOptions& options) {
  GaussianApproximation approx = gaussian_approximation(model, theta, start, options);
  const double value = laplace_value(model, theta, approx);
  if (approx_out != nullptr) *approx_out = std::move(approx);
  return value;
}

}  // namespace jointfit
