#include "jointfit/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "jointfit/error.hpp"

namespace jointfit {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct Objective {
  const JointModel& model;
  const NewtonOptions& newton;
  std::vector<int> l1;
  double rate;
  int evaluations = 0;

  double l1_norm(const Eigen::VectorXd& theta) const {
    double s = 0.0;
    for (int k : l1) s += std::abs(theta(k));
    return s;
  }

  // Full objective; -inf when the inner problem fails.
  double full(const Eigen::VectorXd& theta, const Eigen::VectorXd& start,
              GaussianApproximation* out = nullptr) {
    ++evaluations;
    try {
      const double v = log_marginal_posterior(model, theta, &start, out, newton);
      return std::isfinite(v) ? v : kNegInf;
    } catch (const ConvergenceError&) {
      return kNegInf;
    } catch (const EvaluationError&) {
      return kNegInf;
    }
  }

  double smooth(const Eigen::VectorXd& theta, const Eigen::VectorXd& start) {
    return full(theta, start) + rate * l1_norm(theta);
  }

  Eigen::VectorXd smooth_gradient(const Eigen::VectorXd& theta, const Eigen::VectorXd& start,
                                  double rel) {
    Eigen::VectorXd g(theta.size());
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      const double h = rel * (1.0 + std::abs(theta(i)));
      Eigen::VectorXd tp = theta;
      Eigen::VectorXd tm = theta;
      tp(i) += h;
      tm(i) -= h;
      const double fp = smooth(tp, start);
      const double fm = smooth(tm, start);
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        throw ConvergenceError("objective not finite near theta while differencing coordinate " +
                                   std::to_string(i),
                               std::numeric_limits<double>::infinity());
      }
      g(i) = (fp - fm) / (2.0 * h);
    }
    return g;
  }

  bool is_l1(int i) const { return std::find(l1.begin(), l1.end(), i) != l1.end(); }

  // Minimum-norm ascent pseudo-gradient of the full objective.
  Eigen::VectorXd pseudo_gradient(const Eigen::VectorXd& theta, const Eigen::VectorXd& gs) const {
    Eigen::VectorXd pg = gs;
    for (int k : l1) {
      if (theta(k) > 0.0) {
        pg(k) = gs(k) - rate;
      } else if (theta(k) < 0.0) {
        pg(k) = gs(k) + rate;
      } else if (gs(k) > rate) {
        pg(k) = gs(k) - rate;
      } else if (gs(k) < -rate) {
        pg(k) = gs(k) + rate;
      } else {
        pg(k) = 0.0;
      }
    }
    return pg;
  }
};

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace

std::vector<int> laplace_indices(const JointModel& model) {
  std::vector<int> idx;
  const auto& h = model.hyper_layout();
  for (std::size_t c = 0; c < h.gamma_size.size(); ++c) {
    if (h.gamma_level[c] != AssociationLevel::Spline) continue;
    for (int k = 2; k < h.gamma_size[c]; ++k) idx.push_back(h.gamma_offset[c] + k);
  }
  return idx;
}

Eigen::VectorXd objective_gradient(const JointModel& model, const Eigen::VectorXd& theta,
                                   const Eigen::VectorXd& base_mode, double relative_step,
                                   const NewtonOptions& newton) {
  Objective obj{model, newton, {}, 0.0};
  return obj.smooth_gradient(theta, base_mode, relative_step);
}

Eigen::MatrixXd spd_inverse(const Eigen::MatrixXd& precision, double floor) {
  const Eigen::MatrixXd sym = 0.5 * (precision + precision.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  const Eigen::VectorXd w = es.eigenvalues().cwiseMax(floor);
  return es.eigenvectors() * w.cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
}

HyperOptimum optimize_hyperparameters(const JointModel& model, const Eigen::VectorXd& init,
                                      const OuterOptions& options,
                                      const Eigen::VectorXd* latent_start) {
  if (!init.allFinite()) throw ConfigError("initial hyperparameters are not finite");
  Objective obj{model, options.newton, laplace_indices(model), model.spec().priors.deviation_rate};
  const int d = static_cast<int>(init.size());

  HyperOptimum res;
  Eigen::VectorXd theta = init;
  GaussianApproximation approx;
  {
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(model.layout().dim());
    const Eigen::VectorXd& start =
        latent_start != nullptr && latent_start->size() == zero.size() ? *latent_start : zero;
    approx = gaussian_approximation(model, theta, &start, options.newton);
    ++obj.evaluations;
  }
  double f = laplace_value(model, theta, approx);
  res.initial_objective = f;
  Eigen::VectorXd gs = obj.smooth_gradient(theta, approx.mode, options.gradient_step);
  Eigen::VectorXd pg = obj.pseudo_gradient(theta, gs);
  res.trace.push_back({0, f, pg.cwiseAbs().maxCoeff(), theta});

  Eigen::MatrixXd hinv = Eigen::MatrixXd::Identity(d, d);
  bool fresh = true;  // hinv is the (unscaled) identity
  int it = 0;
  bool converged = false;
  while (it < options.max_iterations) {
    if (pg.cwiseAbs().maxCoeff() == 0.0) {
      converged = true;
      break;
    }
    Eigen::VectorXd dir = hinv * pg;
    for (int k : obj.l1) {
      if (dir(k) * pg(k) <= 0.0) dir(k) = 0.0;
    }
    if (dir.dot(pg) <= 0.0) {
      dir = pg;
      hinv.setIdentity();
      fresh = true;
    }
    const double dmax = dir.cwiseAbs().maxCoeff();
    if (dmax > options.max_step) dir *= options.max_step / dmax;

    Eigen::VectorXd orthant = Eigen::VectorXd::Zero(d);
    for (int k : obj.l1) orthant(k) = theta(k) != 0.0 ? sign(theta(k)) : sign(pg(k));

    bool accepted = false;
    Eigen::VectorXd next;
    GaussianApproximation next_approx;
    double f_next = kNegInf;
    double alpha = 1.0;
    for (int ls = 0; ls < 40; ++ls) {
      next = theta + alpha * dir;
      for (int k : obj.l1) {
        if (sign(next(k)) != orthant(k)) next(k) = 0.0;
      }
      f_next = obj.full(next, approx.mode, &next_approx);
      if (std::isfinite(f_next) && f_next >= f + 1e-4 * pg.dot(next - theta)) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      if (!fresh) {
        hinv.setIdentity();
        fresh = true;
        continue;
      }
      // No ascent along the pseudo-gradient: stationary to numerical precision.
      converged = it > 0 || pg.cwiseAbs().maxCoeff() < 1e-3;
      break;
    }
    ++it;
    const Eigen::VectorXd step = next - theta;
    const Eigen::VectorXd gs_next = obj.smooth_gradient(next, next_approx.mode, options.gradient_step);
    const double change = f_next - f;
    theta = next;
    f = f_next;
    approx = std::move(next_approx);
    // BFGS update on the negated smooth part.
    const Eigen::VectorXd yv = gs - gs_next;
    gs = gs_next;
    pg = obj.pseudo_gradient(theta, gs);
    res.trace.push_back({it, f, pg.cwiseAbs().maxCoeff(), theta});
    const double sy = step.dot(yv);
    if (sy > 1e-10 * step.norm() * yv.norm()) {
      if (fresh) {
        hinv *= sy / yv.squaredNorm();
        fresh = false;
      }
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd left = Eigen::MatrixXd::Identity(d, d) - rho * step * yv.transpose();
      hinv = left * hinv * left.transpose() + rho * step * step.transpose();
    }
    if (std::abs(change) < options.tolerance) {
      converged = true;
      break;
    }
  }

  // Finite-difference Hessian of the smooth part at the mode.
  const Eigen::VectorXd& base = approx.mode;
  Eigen::VectorXd h(d);
  for (int i = 0; i < d; ++i) h(i) = options.hessian_step * (1.0 + std::abs(theta(i)));
  const double f0 = f + obj.rate * obj.l1_norm(theta);
  Eigen::VectorXd fp(d), fm(d);
  for (int i = 0; i < d; ++i) {
    Eigen::VectorXd t = theta;
    t(i) += h(i);
    fp(i) = obj.smooth(t, base);
    t(i) = theta(i) - h(i);
    fm(i) = obj.smooth(t, base);
  }
  Eigen::MatrixXd hess(d, d);
  for (int i = 0; i < d; ++i) {
    hess(i, i) = (fp(i) - 2.0 * f0 + fm(i)) / (h(i) * h(i));
    for (int j = i + 1; j < d; ++j) {
      Eigen::VectorXd t = theta;
      t(i) += h(i);
      t(j) += h(j);
      const double fpp = obj.smooth(t, base);
      t(j) = theta(j) - h(j);
      const double fpm = obj.smooth(t, base);
      t(i) = theta(i) - h(i);
      const double fmm = obj.smooth(t, base);
      t(j) = theta(j) + h(j);
      const double fmp = obj.smooth(t, base);
      hess(i, j) = hess(j, i) = (fpp - fpm - fmp + fmm) / (4.0 * h(i) * h(j));
    }
  }
  if (!hess.allFinite()) {
    throw ConvergenceError("finite-difference Hessian at the hyperparameter mode is not finite",
                           pg.cwiseAbs().maxCoeff());
  }

  // The Laplace prior has no curvature away from zero; use the precision of
  // its moment-matched Gaussian, 1 / (2 / rate^2), for these coordinates.
  for (int k : obj.l1) hess(k, k) -= 0.5 * obj.rate * obj.rate;

  res.theta = theta;
  res.objective = f;
  res.hessian = hess;
  res.covariance = spd_inverse(-hess, options.eigen_floor);
  res.gradient_norm = pg.cwiseAbs().maxCoeff();
  res.iterations = it;
  res.evaluations = obj.evaluations;
  res.converged = converged;
  res.latent = std::move(approx);
  return res;
}

}  // namespace jointfit
