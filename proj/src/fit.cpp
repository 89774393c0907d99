#include "jointfit/fit.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

#include "jointfit/error.hpp"
#include "jointfit/stats.hpp"

namespace jointfit {

namespace {

constexpr double kZ975 = 1.959963984540054;

// Symmetric square root factor A with A A^T = cov.
Eigen::MatrixXd covariance_factor(const Eigen::MatrixXd& cov) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (cov + cov.transpose()));
  const Eigen::VectorXd w = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * w.asDiagonal();
}

ParameterSummary summarize_draws(std::string name, double mode, std::vector<double> draws) {
  ParameterSummary p;
  p.name = std::move(name);
  p.mode = mode;
  p.mean = mean(draws);
  p.sd = std::sqrt(variance(draws));
  std::sort(draws.begin(), draws.end());
  p.q025 = quantile_sorted(draws, 0.025);
  p.q975 = quantile_sorted(draws, 0.975);
  return p;
}

ParameterSummary gaussian_summary(std::string name, double m, double sd) {
  return {std::move(name), m, m, sd, m - kZ975 * sd, m + kZ975 * sd};
}

int gamma_offset(const FitResult& fit, int component) {
  int tail = 0;
  for (std::size_t c = static_cast<std::size_t>(component); c < fit.spec.association.size(); ++c) {
    tail += fit.spec.association[c].coefficient_count();
  }
  return static_cast<int>(fit.hyper_mode.size()) - tail;
}

void check_component(const FitResult& fit, int component) {
  if (component < 0 || component >= static_cast<int>(fit.spec.association.size())) {
    throw InputError("unknown association component index " + std::to_string(component));
  }
}

}  // namespace

const ParameterSummary* FitResult::parameter(const std::string& name) const {
  for (const auto& p : parameters) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

AssociationCoefficients FitResult::association_mode(int component) const {
  check_component(*this, component);
  const auto& comp = spec.association[static_cast<std::size_t>(component)];
  const int off = gamma_offset(*this, component);
  AssociationCoefficients c;
  c.level = comp.level;
  for (int k = 0; k < comp.coefficient_count(); ++k) c.gamma.push_back(hyper_mode(off + k));
  return c;
}

std::optional<AssociationBasis> FitResult::basis(int component) const {
  check_component(*this, component);
  const auto& comp = spec.association[static_cast<std::size_t>(component)];
  if (comp.level == AssociationLevel::Linear) return std::nullopt;
  if (static_cast<std::size_t>(component) < calibration.components.size()) {
    const auto& cc = calibration.components[static_cast<std::size_t>(component)];
    if (cc.basis && cc.basis->knot_count == comp.knots) return cc.basis;
    return build_basis(rw2_precision(comp.knots), cc.domain, spec.association_scaling);
  }
  throw InputError("fit has no calibration for component " + std::to_string(component));
}

Calibration calibration_from_latent(const JointModel& linear_model, const ModelSpec& spec,
                                    const Eigen::VectorXd& latent) {
  Calibration cal;
  for (std::size_t c = 0; c < spec.association.size(); ++c) {
    const Eigen::VectorXd nu = linear_model.shared_component(latent, static_cast<int>(c));
    cal.components.push_back(make_component_calibration(
        spec.association[c], std::vector<double>(nu.data(), nu.data() + nu.size()),
        spec.association_scaling));
  }
  return cal;
}

CalibrationResult calibrate_detailed(const JointDataset& data, const ModelSpec& spec,
                                     const FitOptions& options) {
  if (spec.association.empty()) throw ConfigError("calibration needs an association component");
  CalibrationResult r;
  r.preliminary_spec = spec.linearized();
  const JointModel model(data, r.preliminary_spec);
  r.preliminary = optimize_hyperparameters(model, model.initial_theta(), options.outer);
  if (!r.preliminary.converged) {
    throw ConvergenceError("preliminary Level-1 fit did not converge", r.preliminary.gradient_norm);
  }
  r.calibration = calibration_from_latent(model, spec, r.preliminary.latent.mode);
  return r;
}

Calibration calibrate(const JointDataset& data, const ModelSpec& spec, const FitOptions& options) {
  return calibrate_detailed(data, spec, options).calibration;
}

FitResult fit(const JointDataset& data, const ModelSpec& spec, const FitOptions& options) {
  const auto t0 = std::chrono::steady_clock::now();
  spec.validate();
  if (options.samples < 2) throw ConfigError("posterior sampling needs at least two draws");

  FitResult res;
  res.spec = spec;
  res.seed = options.seed;
  res.samples = options.samples;
  res.fingerprint = data.fingerprint();
  res.n_subjects = data.subject_count();

  std::optional<JointModel> model;
  HyperOptimum opt;
  if (spec.any_nonlinear()) {
    CalibrationResult cr = calibrate_detailed(data, spec, options);
    res.calibration = std::move(cr.calibration);
    model.emplace(data, spec, &res.calibration);
    Eigen::VectorXd theta = model->initial_theta();
    const HyperLayout& h = model->hyper_layout();
    const Eigen::VectorXd& pre = cr.preliminary.theta;
    const int shared = h.gamma_begin();
    theta.head(shared) = pre.head(shared);
    for (std::size_t c = 0; c < h.gamma_offset.size(); ++c) {
      theta(h.gamma_offset[c]) = pre(shared + static_cast<int>(c));
    }
    opt = optimize_hyperparameters(*model, theta, options.outer, &cr.preliminary.latent.mode);
  } else {
    model.emplace(data, spec);
    opt = optimize_hyperparameters(*model, model->initial_theta(), options.outer);
    res.calibration = calibration_from_latent(*model, spec, opt.latent.mode);
  }

  const JointModel& m = *model;
  const LatentLayout& lay = m.layout();
  res.n_longitudinal = m.n_longitudinal();
  res.n_survival_rows = m.n_survival_rows();
  res.hyper_names = m.hyper_layout().names(spec.association);
  res.hyper_mode = opt.theta;
  res.hyper_cov = opt.covariance;
  res.latent_mode = opt.latent.mode;
  res.latent_sd = opt.latent.factor.inverse_diagonal().cwiseMax(0.0).cwiseSqrt();
  res.converged = opt.converged;
  res.iterations = opt.iterations;
  res.evaluations = opt.evaluations;
  res.inner_iterations = opt.latent.iterations;
  res.objective = opt.objective;
  res.initial_objective = opt.initial_objective;
  res.gradient_norm = opt.gradient_norm;

  // Joint posterior draws: u ~ N(u*, H^-1), theta ~ N(theta*, Sigma_theta).
  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Eigen::MatrixXd theta_factor = covariance_factor(opt.covariance);
  const int d = static_cast<int>(opt.theta.size());
  const std::size_t n_obs = m.n_observations();
  PointwiseAccumulator acc(n_obs);
  std::vector<double> buffer(n_obs);
  Eigen::MatrixXd theta_draws(options.samples, d);
  Eigen::VectorXd z(lay.dim());
  Eigen::VectorXd e(d);
  for (int s = 0; s < options.samples; ++s) {
    for (Eigen::Index k = 0; k < z.size(); ++k) z(k) = normal(rng);
    for (int k = 0; k < d; ++k) e(k) = normal(rng);
    const Eigen::VectorXd u = opt.latent.mode + opt.latent.factor.sample_transform(z);
    const Eigen::VectorXd th = opt.theta + theta_factor * e;
    theta_draws.row(s) = th.transpose();
    m.pointwise_loglik(u, th, buffer);
    acc.add(buffer);
  }
  m.pointwise_loglik(opt.latent.mode, opt.theta, buffer);
  res.criteria = criteria_from_summary(acc, buffer);

  // Parameter table.
  for (int j = 0; j < lay.fixed; ++j) {
    const int k = lay.beta_offset() + j;
    res.parameters.push_back(gaussian_summary("beta_" + spec.fixed_effects[j].label(),
                                              res.latent_mode(k), res.latent_sd(k)));
  }
  for (int j = 0; j < lay.survival_fixed; ++j) {
    const int k = lay.phi_offset() + j;
    res.parameters.push_back(gaussian_summary("phi_" + spec.survival_covariates[j],
                                              res.latent_mode(k), res.latent_sd(k)));
  }
  auto column = [&](int k, auto transform) {
    std::vector<double> v(static_cast<std::size_t>(options.samples));
    for (int s = 0; s < options.samples; ++s) v[static_cast<std::size_t>(s)] = transform(theta_draws(s, k));
    return v;
  };
  auto expm_half = [](double x) { return std::exp(-0.5 * x); };
  auto expo = [](double x) { return std::exp(x); };
  auto tanh_f = [](double x) { return std::tanh(x); };
  auto ident = [](double x) { return x; };
  const HyperLayout& h = m.hyper_layout();
  res.parameters.push_back(summarize_draws("sigma_e", expm_half(opt.theta(h.log_tau_e())),
                                           column(h.log_tau_e(), expm_half)));
  if (h.random_dim >= 1) {
    const int b = h.sigma_b_begin();
    res.parameters.push_back(summarize_draws("sigma_b0", expo(opt.theta(b)), column(b, expo)));
    if (h.random_dim == 2) {
      res.parameters.push_back(
          summarize_draws("sigma_b1", expo(opt.theta(b + 1)), column(b + 1, expo)));
      res.parameters.push_back(
          summarize_draws("rho_b", tanh_f(opt.theta(b + 2)), column(b + 2, tanh_f)));
    }
  }
  if (h.has_baseline_precision) {
    const int k = h.log_tau_baseline();
    res.parameters.push_back(
        summarize_draws("sigma_baseline", expm_half(opt.theta(k)), column(k, expm_half)));
  }
  for (int k = h.gamma_begin(); k < d; ++k) {
    res.parameters.push_back(summarize_draws(res.hyper_names[static_cast<std::size_t>(k)],
                                             opt.theta(k), column(k, ident)));
  }

  res.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

std::vector<double> default_curve_grid(const FitResult& fit, int component, int points) {
  check_component(fit, component);
  if (points < 2) throw ConfigError("curve grid needs at least two points");
  const Domain dom = fit.calibration.components.at(static_cast<std::size_t>(component)).domain;
  std::vector<double> g(static_cast<std::size_t>(points));
  for (int i = 0; i < points; ++i) {
    g[static_cast<std::size_t>(i)] =
        i == points - 1 ? dom.hi : dom.lo + (dom.hi - dom.lo) * i / (points - 1);
  }
  return g;
}

std::vector<CurvePoint> posterior_curve(const FitResult& fit, int component,
                                        const std::vector<double>& grid, int draws) {
  check_component(fit, component);
  if (draws < 2) throw ConfigError("curve needs at least two draws");
  const auto& comp = fit.spec.association[static_cast<std::size_t>(component)];
  const Domain dom = fit.calibration.components.at(static_cast<std::size_t>(component)).domain;
  const double slack = 0.2 * (dom.hi - dom.lo);
  for (double x : grid) {
    if (x < dom.lo - slack - 1e-12 * std::abs(dom.lo) || x > dom.hi + slack + 1e-12 * std::abs(dom.hi)) {
      throw DomainError("curve grid point " + std::to_string(x) +
                        " lies more than 20% of the domain width outside the calibration domain");
    }
  }
  const std::optional<AssociationBasis> basis = fit.basis(component);
  const AssociationBasis* bp = basis ? &*basis : nullptr;
  const int off = gamma_offset(fit, component);
  const int kc = comp.coefficient_count();
  const Eigen::VectorXd mode = fit.hyper_mode.segment(off, kc);
  const Eigen::MatrixXd factor = covariance_factor(fit.hyper_cov.block(off, off, kc, kc));

  std::mt19937_64 rng(derive_seed(fit.seed, 0x63757276ULL + static_cast<std::uint64_t>(component)));
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd f(draws, static_cast<Eigen::Index>(grid.size()));
  Eigen::VectorXd e(kc);
  AssociationCoefficients coef;
  coef.level = comp.level;
  coef.gamma.resize(static_cast<std::size_t>(kc));
  for (int s = 0; s < draws; ++s) {
    for (int k = 0; k < kc; ++k) e(k) = normal(rng);
    const Eigen::VectorXd g = mode + factor * e;
    for (int k = 0; k < kc; ++k) coef.gamma[static_cast<std::size_t>(k)] = g(k);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      f(s, static_cast<Eigen::Index>(i)) = association_value(coef, bp, grid[i]);
    }
  }
  std::vector<CurvePoint> out;
  std::vector<double> col(static_cast<std::size_t>(draws));
  for (std::size_t i = 0; i < grid.size(); ++i) {
    for (int s = 0; s < draws; ++s) col[static_cast<std::size_t>(s)] = f(s, static_cast<Eigen::Index>(i));
    CurvePoint p;
    p.nu = grid[i];
    if (grid[i] == 0.0) {
      out.push_back(p);
      continue;
    }
    p.f_mean = mean(col);
    std::sort(col.begin(), col.end());
    p.f_lo = quantile_sorted(col, 0.025);
    p.f_hi = quantile_sorted(col, 0.975);
    out.push_back(p);
  }
  return out;
}

SharedComponentSummary summarize_values(std::vector<double> values, int bins) {
  SharedComponentSummary s;
  if (values.empty()) throw InputError("no shared-component values to summarize");
  std::sort(values.begin(), values.end());
  for (double p : s.percent) s.percentiles.push_back(quantile_sorted(values, p / 100.0));
  const double lo = values.front();
  const double hi = values.back();
  s.bin_edges.resize(static_cast<std::size_t>(bins) + 1);
  for (int b = 0; b <= bins; ++b) {
    s.bin_edges[static_cast<std::size_t>(b)] = b == bins ? hi : lo + (hi - lo) * b / bins;
  }
  s.bin_counts.assign(static_cast<std::size_t>(bins), 0.0);
  const double width = hi - lo;
  for (double v : values) {
    int b = width > 0.0 ? static_cast<int>((v - lo) / width * bins) : 0;
    b = std::clamp(b, 0, bins - 1);
    s.bin_counts[static_cast<std::size_t>(b)] += 1.0;
  }
  return s;
}

SharedComponentSummary shared_component_summary(const FitResult& fit, int component) {
  check_component(fit, component);
  return summarize_values(fit.calibration.components.at(static_cast<std::size_t>(component)).nu_tilde);
}

}  // namespace jointfit
