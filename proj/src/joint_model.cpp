#include "jointfit/joint_model.hpp"

#include <algorithm>
#include <cmath>

#include "jointfit/error.hpp"
#include "jointfit/stats.hpp"

namespace jointfit {

LatentField LatentField::unpack(const LatentLayout& l, const Eigen::VectorXd& u) {
  LatentField f;
  f.b.resize(l.subjects, l.local);
  for (int i = 0; i < l.subjects; ++i) {
    for (int k = 0; k < l.local; ++k) f.b(i, k) = u(i * l.local + k);
  }
  f.beta = u.segment(l.beta_offset(), l.fixed);
  f.phi = u.segment(l.phi_offset(), l.survival_fixed);
  f.log_baseline = u.segment(l.baseline_offset(), l.baseline);
  return f;
}

Eigen::VectorXd LatentField::pack(const LatentLayout& l) const {
  Eigen::VectorXd u(l.dim());
  for (int i = 0; i < l.subjects; ++i) {
    for (int k = 0; k < l.local; ++k) u(i * l.local + k) = b(i, k);
  }
  u.segment(l.beta_offset(), l.fixed) = beta;
  u.segment(l.phi_offset(), l.survival_fixed) = phi;
  u.segment(l.baseline_offset(), l.baseline) = log_baseline;
  return u;
}

int HyperLayout::dim() const {
  int d = gamma_begin();
  for (int s : gamma_size) d += s;
  return d;
}

std::vector<std::string> HyperLayout::names(
    const std::vector<AssociationComponent>& components) const {
  std::vector<std::string> n{"log_tau_e"};
  if (random_dim == 1) n.push_back("log_sigma_b0");
  if (random_dim == 2) {
    n.push_back("log_sigma_b0");
    n.push_back("log_sigma_b1");
    n.push_back("atanh_rho");
  }
  if (has_baseline_precision) n.push_back("log_tau_baseline");
  for (std::size_t c = 0; c < gamma_size.size(); ++c) {
    const std::string prefix =
        components.size() > 1 ? to_string(components[c].kind) + "_gamma" : std::string("gamma");
    for (int k = 0; k < gamma_size[c]; ++k) n.push_back(prefix + std::to_string(k + 1));
  }
  return n;
}

HyperVector HyperVector::unpack(const HyperLayout& l, const Eigen::VectorXd& theta) {
  HyperVector h;
  h.log_tau_e = theta(l.log_tau_e());
  h.sigma_b_params = theta.segment(l.sigma_b_begin(), l.sigma_b_count());
  if (l.has_baseline_precision) h.log_tau_baseline = theta(l.log_tau_baseline());
  for (std::size_t c = 0; c < l.gamma_size.size(); ++c) {
    h.gamma.push_back(theta.segment(l.gamma_offset[c], l.gamma_size[c]));
  }
  return h;
}

Eigen::VectorXd HyperVector::pack(const HyperLayout& l) const {
  Eigen::VectorXd theta(l.dim());
  theta(l.log_tau_e()) = log_tau_e;
  theta.segment(l.sigma_b_begin(), l.sigma_b_count()) = sigma_b_params;
  if (l.has_baseline_precision) theta(l.log_tau_baseline()) = log_tau_baseline.value_or(0.0);
  for (std::size_t c = 0; c < l.gamma_size.size(); ++c) {
    theta.segment(l.gamma_offset[c], l.gamma_size[c]) = gamma[c];
  }
  return theta;
}

Eigen::MatrixXd random_effects_covariance(int random_dim, const Eigen::VectorXd& params) {
  Eigen::MatrixXd s(random_dim, random_dim);
  if (random_dim == 1) {
    s(0, 0) = std::exp(2.0 * params(0));
  } else if (random_dim == 2) {
    const double s0 = std::exp(params(0));
    const double s1 = std::exp(params(1));
    const double rho = std::tanh(params(2));
    s << s0 * s0, rho * s0 * s1, rho * s0 * s1, s1 * s1;
  }
  return s;
}

ComponentCalibration make_component_calibration(const AssociationComponent& component,
                                                std::vector<double> nu_tilde,
                                                PrecisionScaling scaling) {
  ComponentCalibration cc;
  cc.component = component;
  if (nu_tilde.empty()) throw DomainError("no expanded rows to calibrate the association domain");
  const auto [lo, hi] = std::minmax_element(nu_tilde.begin(), nu_tilde.end());
  cc.domain = {*lo, *hi};
  cc.nu_tilde = std::move(nu_tilde);
  if (component.level == AssociationLevel::Linear) {
    if (!(cc.domain.lo < cc.domain.hi)) {
      // Level 1 does not use the domain; keep it non-degenerate for curve grids.
      cc.domain = {cc.domain.lo - 0.5, cc.domain.hi + 0.5};
    }
    return cc;
  }
  if (!(cc.domain.hi - cc.domain.lo > 1e-12 * std::max(1.0, std::abs(cc.domain.lo)))) {
    throw DomainError("shared component " + to_string(component.kind) +
                      " is constant across expanded rows; cannot place knots");
  }
  cc.basis = build_basis(rw2_precision(component.knots), cc.domain, scaling);
  cc.knots = cc.basis->knots;
  return cc;
}

struct JointModel::ThetaState {
  double tau_e = 1.0;
  double log_tau_e = 0.0;
  Eigen::MatrixXd sigma_b_inv;
  double log_det_sigma_b = 0.0;
  double tau_baseline = 1.0;
  double log_tau_baseline = 0.0;
  Eigen::MatrixXd weights;  // rows x components: g_c(nu-tilde_r; gamma_c)
};

JointModel::ThetaState JointModel::theta_state(const Eigen::VectorXd& theta) const {
  if (theta.size() != hyper_.dim()) {
    throw ConfigError("hyperparameter vector has length " + std::to_string(theta.size()) +
                      ", expected " + std::to_string(hyper_.dim()));
  }
  ThetaState s;
  s.log_tau_e = theta(hyper_.log_tau_e());
  s.tau_e = std::exp(s.log_tau_e);
  if (layout_.local > 0) {
    const Eigen::MatrixXd sigma =
        random_effects_covariance(layout_.local, theta.segment(hyper_.sigma_b_begin(), hyper_.sigma_b_count()));
    Eigen::LLT<Eigen::MatrixXd> llt(sigma);
    s.sigma_b_inv = llt.solve(Eigen::MatrixXd::Identity(layout_.local, layout_.local));
    s.log_det_sigma_b = 0.0;
    const Eigen::MatrixXd l = llt.matrixL();
    for (int k = 0; k < layout_.local; ++k) s.log_det_sigma_b += 2.0 * std::log(l(k, k));
  }
  if (hyper_.has_baseline_precision) {
    s.log_tau_baseline = theta(hyper_.log_tau_baseline());
    s.tau_baseline = std::exp(s.log_tau_baseline);
  }
  const auto rows = static_cast<Eigen::Index>(expanded_.rows.size());
  const auto ncomp = static_cast<Eigen::Index>(assoc_design_.size());
  s.weights.resize(rows, ncomp);
  for (Eigen::Index c = 0; c < ncomp; ++c) {
    const Eigen::VectorXd g = theta.segment(hyper_.gamma_offset[c], hyper_.gamma_size[c]);
    s.weights.col(c) = assoc_design_[c] * g;
  }
  return s;
}

JointModel::JointModel(const JointDataset& data, const ModelSpec& spec,
                       const Calibration* calibration)
    : JointModel(data, spec,
                 expand_survival(data.survival(), spec.baseline_knots, spec.evaluation),
                 calibration) {}

JointModel::JointModel(const JointDataset& data, const ModelSpec& spec, ExpandedSurvival expanded,
                       const Calibration* calibration)
    : spec_(spec), expanded_(std::move(expanded)) {
  spec_.validate();
  design_ = design_matrices(spec_, data, expanded_);

  layout_.subjects = static_cast<int>(data.subject_count());
  layout_.local = spec_.random_effects.dimension();
  layout_.fixed = static_cast<int>(spec_.fixed_effects.size());
  layout_.survival_fixed = static_cast<int>(spec_.survival_covariates.size());
  layout_.baseline = expanded_.rows.empty() ? 0 : expanded_.interval_count();

  hyper_.random_dim = layout_.local;
  hyper_.has_baseline_precision = layout_.baseline >= 3;
  int offset = hyper_.gamma_begin();
  for (const auto& c : spec_.association) {
    hyper_.gamma_offset.push_back(offset);
    hyper_.gamma_size.push_back(c.coefficient_count());
    hyper_.gamma_level.push_back(c.level);
    offset += c.coefficient_count();
  }

  const auto& recs = data.longitudinal();
  y_.resize(static_cast<Eigen::Index>(recs.size()));
  for (std::size_t j = 0; j < recs.size(); ++j) y_(static_cast<Eigen::Index>(j)) = recs[j].y;
  record_subject_ = data.record_subject();
  record_offsets_ = data.subject_offsets();
  row_offsets_ = expanded_.subject_offsets(data.subject_count());

  const auto nrows = static_cast<Eigen::Index>(expanded_.rows.size());
  log_exposure_.resize(nrows);
  for (Eigen::Index k = 0; k < nrows; ++k) log_exposure_(k) = std::log(expanded_.rows[k].exposure);

  // Association designs.
  for (std::size_t c = 0; c < spec_.association.size(); ++c) {
    const auto& comp = spec_.association[c];
    if (comp.level == AssociationLevel::Linear) {
      bases_.emplace_back();
      assoc_design_.push_back(RowMatrix::Ones(nrows, 1));
      continue;
    }
    if (calibration == nullptr || calibration->components.size() != spec_.association.size()) {
      throw ConfigError("non-linear association component " + comp.label() +
                        " requires a calibration");
    }
    const auto& cc = calibration->components[c];
    if (static_cast<Eigen::Index>(cc.nu_tilde.size()) != nrows) {
      throw ConfigError("calibration has " + std::to_string(cc.nu_tilde.size()) +
                        " evaluation points but the model has " + std::to_string(nrows) +
                        " expanded rows");
    }
    AssociationBasis basis = cc.basis ? *cc.basis
                                      : build_basis(rw2_precision(comp.knots), cc.domain,
                                                    spec_.association_scaling);
    if (basis.knot_count != comp.knots) {
      basis = build_basis(rw2_precision(comp.knots), cc.domain, spec_.association_scaling);
    }
    RowMatrix d(nrows, comp.coefficient_count());
    for (Eigen::Index k = 0; k < nrows; ++k) {
      d.row(k) = scaling_design_row(comp.level, &basis, cc.nu_tilde[k]).transpose();
    }
    bases_.emplace_back(std::move(basis));
    assoc_design_.push_back(std::move(d));
  }

  // Longitudinal sufficient statistics (the Gaussian Hessian is theta-scaled).
  const int p = layout_.fixed;
  const int q = layout_.local;
  const int n = layout_.subjects;
  xtx_ = design_.x.transpose() * design_.x;
  ztz_ = Eigen::MatrixXd::Zero(q, static_cast<Eigen::Index>(n) * q);
  ztx_ = Eigen::MatrixXd::Zero(q, static_cast<Eigen::Index>(n) * p);
  for (std::size_t j = 0; j < recs.size(); ++j) {
    const int i = record_subject_[j];
    const auto zj = design_.z.row(static_cast<Eigen::Index>(j));
    const auto xj = design_.x.row(static_cast<Eigen::Index>(j));
    ztz_.middleCols(i * q, q).noalias() += zj.transpose() * zj;
    ztx_.middleCols(i * p, p).noalias() += zj.transpose() * xj;
  }

  if (hyper_.has_baseline_precision) {
    rw2_ = rw2_precision(layout_.baseline).matrix;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(rw2_);
    rw2_log_pdet_ = 0.0;
    const auto& w = es.eigenvalues();
    for (Eigen::Index k = 2; k < w.size(); ++k) rw2_log_pdet_ += std::log(w(k));
  }
}

const AssociationBasis* JointModel::basis(int component) const {
  const auto& b = bases_.at(static_cast<std::size_t>(component));
  return b ? &*b : nullptr;
}

void JointModel::survival_predictor(const Eigen::VectorXd& u, const ThetaState& s,
                                    Eigen::VectorXd& eta) const {
  const int p = layout_.fixed;
  const int q = layout_.local;
  const auto beta = u.segment(layout_.beta_offset(), p);
  const auto phi = u.segment(layout_.phi_offset(), layout_.survival_fixed);
  const auto lam = u.segment(layout_.baseline_offset(), layout_.baseline);
  const auto nrows = static_cast<Eigen::Index>(expanded_.rows.size());
  eta.resize(nrows);
  // Survival covariate contribution per subject.
  Eigen::VectorXd wphi = design_.w * phi;
  for (Eigen::Index k = 0; k < nrows; ++k) {
    const auto& row = expanded_.rows[k];
    const auto bi = u.segment(row.subject * q, q);
    double v = log_exposure_(k) + lam(row.interval) + wphi(row.subject);
    for (std::size_t c = 0; c < spec_.association.size(); ++c) {
      const bool cv = spec_.association[c].kind == SharedKind::CurrentValue;
      const double nu = cv ? design_.x_mid.row(k).dot(beta) + design_.z_mid.row(k).dot(bi)
                           : design_.dx_mid.row(k).dot(beta) + design_.dz_mid.row(k).dot(bi);
      v += s.weights(k, static_cast<Eigen::Index>(c)) * nu;
    }
    eta(k) = v;
  }
}

DensityTerms JointModel::log_density_terms(const Eigen::VectorXd& u,
                                           const Eigen::VectorXd& theta) const {
  const ThetaState s = theta_state(theta);
  const int p = layout_.fixed;
  const int q = layout_.local;
  DensityTerms t;
  const auto beta = u.segment(layout_.beta_offset(), p);

  const auto n = static_cast<Eigen::Index>(y_.size());
  double ss = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto bi = u.segment(record_subject_[j] * q, q);
    const double r = y_(j) - design_.x.row(j).dot(beta) - design_.z.row(j).dot(bi);
    ss += r * r;
  }
  t.longitudinal = 0.5 * static_cast<double>(n) * (s.log_tau_e - kLog2Pi) - 0.5 * s.tau_e * ss;

  Eigen::VectorXd eta;
  survival_predictor(u, s, eta);
  double surv = 0.0;
  for (Eigen::Index k = 0; k < eta.size(); ++k) {
    surv += expanded_.rows[k].count * eta(k) - std::exp(eta(k));
  }
  t.survival = surv;

  const double v = spec_.priors.fixed_effect_variance;
  const auto phi = u.segment(layout_.phi_offset(), layout_.survival_fixed);
  t.prior_fixed = -0.5 * static_cast<double>(p + layout_.survival_fixed) * (kLog2Pi + std::log(v)) -
                  0.5 * (beta.squaredNorm() + phi.squaredNorm()) / v;

  if (q > 0) {
    double quad = 0.0;
    for (int i = 0; i < layout_.subjects; ++i) {
      const auto bi = u.segment(i * q, q);
      quad += bi.dot(s.sigma_b_inv * bi);
    }
    t.prior_random = -0.5 * layout_.subjects * (q * kLog2Pi + s.log_det_sigma_b) - 0.5 * quad;
  }

  if (hyper_.has_baseline_precision) {
    const auto lam = u.segment(layout_.baseline_offset(), layout_.baseline);
    const double rank = layout_.baseline - 2;
    t.prior_baseline = 0.5 * rank * (s.log_tau_baseline - kLog2Pi) + 0.5 * rw2_log_pdet_ -
                       0.5 * s.tau_baseline * lam.dot(rw2_ * lam);
  }
  return t;
}

double JointModel::log_density(const Eigen::VectorXd& u, const Eigen::VectorXd& theta) const {
  const DensityTerms t = log_density_terms(u, theta);
  const std::pair<const char*, double> terms[] = {{"longitudinal", t.longitudinal},
                                                  {"survival", t.survival},
                                                  {"prior_fixed", t.prior_fixed},
                                                  {"prior_random", t.prior_random},
                                                  {"prior_baseline", t.prior_baseline}};
  for (const auto& [name, value] : terms) {
    if (!std::isfinite(value)) {
      throw EvaluationError(name, std::string("non-finite joint log-density term: ") + name);
    }
  }
  return t.total();
}

Eigen::VectorXd JointModel::gradient(const Eigen::VectorXd& u, const Eigen::VectorXd& theta) const {
  const ThetaState s = theta_state(theta);
  const int p = layout_.fixed;
  const int q = layout_.local;
  Eigen::VectorXd g = Eigen::VectorXd::Zero(layout_.dim());
  const auto beta = u.segment(layout_.beta_offset(), p);
  auto g_beta = g.segment(layout_.beta_offset(), p);

  const auto n = static_cast<Eigen::Index>(y_.size());
  for (Eigen::Index j = 0; j < n; ++j) {
    const int i = record_subject_[j];
    const auto bi = u.segment(i * q, q);
    const double r = s.tau_e * (y_(j) - design_.x.row(j).dot(beta) - design_.z.row(j).dot(bi));
    g_beta += r * design_.x.row(j).transpose();
    g.segment(i * q, q) += r * design_.z.row(j).transpose();
  }

  Eigen::VectorXd eta;
  survival_predictor(u, s, eta);
  auto g_phi = g.segment(layout_.phi_offset(), layout_.survival_fixed);
  auto g_lam = g.segment(layout_.baseline_offset(), layout_.baseline);
  for (Eigen::Index k = 0; k < eta.size(); ++k) {
    const auto& row = expanded_.rows[k];
    const double resid = row.count - std::exp(eta(k));
    g_lam(row.interval) += resid;
    if (layout_.survival_fixed > 0) g_phi += resid * design_.w.row(row.subject).transpose();
    for (std::size_t c = 0; c < spec_.association.size(); ++c) {
      const double wr = resid * s.weights(k, static_cast<Eigen::Index>(c));
      if (spec_.association[c].kind == SharedKind::CurrentValue) {
        g_beta += wr * design_.x_mid.row(k).transpose();
        g.segment(row.subject * q, q) += wr * design_.z_mid.row(k).transpose();
      } else {
        g_beta += wr * design_.dx_mid.row(k).transpose();
        g.segment(row.subject * q, q) += wr * design_.dz_mid.row(k).transpose();
      }
    }
  }

  const double v = spec_.priors.fixed_effect_variance;
  g_beta -= beta / v;
  g_phi -= u.segment(layout_.phi_offset(), layout_.survival_fixed) / v;
  for (int i = 0; i < layout_.subjects && q > 0; ++i) {
    g.segment(i * q, q) -= s.sigma_b_inv * u.segment(i * q, q);
  }
  if (hyper_.has_baseline_precision) {
    g_lam -= s.tau_baseline * (rw2_ * u.segment(layout_.baseline_offset(), layout_.baseline));
  }
  return g;
}

BlockArrowMatrix JointModel::negative_hessian(const Eigen::VectorXd& u,
                                              const Eigen::VectorXd& theta) const {
  const ThetaState s = theta_state(theta);
  const int p = layout_.fixed;
  const int q = layout_.local;
  const int r = layout_.survival_fixed;
  const int gdim = layout_.global();
  BlockArrowMatrix h(layout_.subjects, q, gdim);

  // Longitudinal Gaussian part.
  h.global().topLeftCorner(p, p) += s.tau_e * xtx_;
  for (int i = 0; i < layout_.subjects; ++i) {
    h.local(i) += s.tau_e * ztz_.middleCols(i * q, q);
    h.coupling(i).leftCols(p) += s.tau_e * ztx_.middleCols(i * p, p);
    if (q > 0) h.local(i) += s.sigma_b_inv;
  }

  // Poisson part: mu * a a^T with a sparse in the global block.
  Eigen::VectorXd eta;
  survival_predictor(u, s, eta);
  std::vector<int> idx(static_cast<std::size_t>(p + r + 1));
  Eigen::VectorXd val(p + r + 1);
  Eigen::VectorXd zloc(q);
  for (Eigen::Index k = 0; k < eta.size(); ++k) {
    const auto& row = expanded_.rows[k];
    const double mu = std::exp(eta(k));
    val.setZero();
    zloc.setZero();
    for (std::size_t c = 0; c < spec_.association.size(); ++c) {
      const double w = s.weights(k, static_cast<Eigen::Index>(c));
      if (spec_.association[c].kind == SharedKind::CurrentValue) {
        val.head(p) += w * design_.x_mid.row(k).transpose();
        zloc += w * design_.z_mid.row(k).transpose();
      } else {
        val.head(p) += w * design_.dx_mid.row(k).transpose();
        zloc += w * design_.dz_mid.row(k).transpose();
      }
    }
    for (int j = 0; j < p; ++j) idx[j] = j;
    for (int j = 0; j < r; ++j) {
      idx[p + j] = p + j;
      val(p + j) = design_.w(row.subject, j);
    }
    idx[p + r] = p + r + row.interval;
    val(p + r) = 1.0;

    auto& gl = h.global();
    for (int a = 0; a < p + r + 1; ++a) {
      const double ma = mu * val(a);
      if (ma == 0.0) continue;
      for (int b = 0; b < p + r + 1; ++b) gl(idx[a], idx[b]) += ma * val(b);
    }
    if (q > 0) {
      h.local(row.subject).noalias() += mu * zloc * zloc.transpose();
      auto cpl = h.coupling(row.subject);
      for (int b = 0; b < p + r + 1; ++b) cpl.col(idx[b]) += mu * val(b) * zloc;
    }
  }

  const double v = spec_.priors.fixed_effect_variance;
  for (int j = 0; j < p + r; ++j) h.global()(j, j) += 1.0 / v;
  if (hyper_.has_baseline_precision) {
    h.global().bottomRightCorner(layout_.baseline, layout_.baseline) += s.tau_baseline * rw2_;
  }
  return h;
}

double JointModel::log_hyperprior(const Eigen::VectorXd& theta) const {
  const Priors& pr = spec_.priors;
  double lp = 0.0;
  // sigma_e^2 ~ IG(a, b); internal log tau_e with Jacobian.
  {
    const double a = pr.residual_shape;
    const double b = pr.residual_scale;
    const double th = theta(hyper_.log_tau_e());
    lp += a * std::log(b) - std::lgamma(a) + a * th - b * std::exp(th);
  }
  // Sigma_b ~ Inverse-Wishart(df, I).
  const int q = layout_.local;
  if (q > 0) {
    const Eigen::VectorXd par = theta.segment(hyper_.sigma_b_begin(), hyper_.sigma_b_count());
    const Eigen::MatrixXd sigma = random_effects_covariance(q, par);
    const double nu = pr.re_df;
    double log_mgamma = 0.25 * q * (q - 1) * std::log(M_PI);
    for (int j = 1; j <= q; ++j) log_mgamma += std::lgamma(0.5 * nu + 0.5 * (1 - j));
    Eigen::LLT<Eigen::MatrixXd> llt(sigma);
    const Eigen::MatrixXd l = llt.matrixL();
    double logdet = 0.0;
    for (int k = 0; k < q; ++k) logdet += 2.0 * std::log(l(k, k));
    const double trace_inv = llt.solve(Eigen::MatrixXd::Identity(q, q)).trace();
    lp += -0.5 * nu * q * std::log(2.0) - log_mgamma - 0.5 * (nu + q + 1) * logdet - 0.5 * trace_inv;
    if (q == 1) {
      lp += std::log(2.0) + 2.0 * par(0);
    } else {
      const double rho = std::tanh(par(2));
      lp += std::log(4.0) + 3.0 * par(0) + 3.0 * par(1) + std::log1p(-rho * rho);
    }
  }
  // PC prior: sigma = tau^{-1/2} ~ Exp(lambda).
  if (hyper_.has_baseline_precision) {
    const double lambda = pr.pc_rate();
    const double sigma = std::exp(-0.5 * theta(hyper_.log_tau_baseline()));
    lp += std::log(lambda) - lambda * sigma + std::log(0.5 * sigma);
  }
  for (std::size_t c = 0; c < hyper_.gamma_size.size(); ++c) {
    for (int k = 0; k < hyper_.gamma_size[c]; ++k) {
      const double g = theta(hyper_.gamma_offset[c] + k);
      if (k < 2) {
        lp += -0.5 * (kLog2Pi + std::log(pr.gamma_variance)) - 0.5 * g * g / pr.gamma_variance;
      } else {
        lp += std::log(0.5 * pr.deviation_rate) - pr.deviation_rate * std::abs(g);
      }
    }
  }
  return lp;
}

void JointModel::pointwise_loglik(const Eigen::VectorXd& u, const Eigen::VectorXd& theta,
                                  std::span<double> out) const {
  const ThetaState s = theta_state(theta);
  const int p = layout_.fixed;
  const int q = layout_.local;
  const auto beta = u.segment(layout_.beta_offset(), p);
  const auto n = static_cast<Eigen::Index>(y_.size());
  const double c0 = 0.5 * (s.log_tau_e - kLog2Pi);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto bi = u.segment(record_subject_[j] * q, q);
    const double r = y_(j) - design_.x.row(j).dot(beta) - design_.z.row(j).dot(bi);
    out[static_cast<std::size_t>(j)] = c0 - 0.5 * s.tau_e * r * r;
  }
  Eigen::VectorXd eta;
  survival_predictor(u, s, eta);
  for (Eigen::Index k = 0; k < eta.size(); ++k) {
    out[static_cast<std::size_t>(n + k)] = expanded_.rows[k].count * eta(k) - std::exp(eta(k));
  }
}

Eigen::VectorXd JointModel::shared_component(const Eigen::VectorXd& u, int component) const {
  const int p = layout_.fixed;
  const int q = layout_.local;
  const auto beta = u.segment(layout_.beta_offset(), p);
  const bool cv = spec_.association.at(static_cast<std::size_t>(component)).kind ==
                  SharedKind::CurrentValue;
  const auto nrows = static_cast<Eigen::Index>(expanded_.rows.size());
  Eigen::VectorXd nu(nrows);
  for (Eigen::Index k = 0; k < nrows; ++k) {
    const auto bi = u.segment(expanded_.rows[k].subject * q, q);
    nu(k) = cv ? design_.x_mid.row(k).dot(beta) + design_.z_mid.row(k).dot(bi)
               : design_.dx_mid.row(k).dot(beta) + design_.dz_mid.row(k).dot(bi);
  }
  return nu;
}

Eigen::VectorXd JointModel::initial_theta() const {
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(hyper_.dim());
  double var_y = 1.0;
  if (y_.size() >= 2) {
    const double m = y_.mean();
    var_y = (y_.array() - m).square().sum() / static_cast<double>(y_.size() - 1);
  }
  if (!(var_y > 0.0)) var_y = 1.0;
  theta(hyper_.log_tau_e()) = -std::log(var_y);
  const double sd0 = std::log(0.5 * std::sqrt(var_y));
  if (layout_.local >= 1) theta(hyper_.sigma_b_begin()) = sd0;
  if (layout_.local == 2) {
    theta(hyper_.sigma_b_begin() + 1) = sd0;
    theta(hyper_.sigma_b_begin() + 2) = 0.0;
  }
  if (hyper_.has_baseline_precision) theta(hyper_.log_tau_baseline()) = -2.0 * std::log(0.2);
  return theta;
}

}  // namespace jointfit
