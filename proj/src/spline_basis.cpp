#include "jointfit/spline_basis.hpp"

#include <algorithm>
#include <cmath>

#include "jointfit/error.hpp"

namespace jointfit {

std::string to_string(AssociationLevel level) {
  switch (level) {
    case AssociationLevel::Linear: return "linear";
    case AssociationLevel::Quadratic: return "quadratic";
    case AssociationLevel::Spline: return "spline";
  }
  return "unknown";
}

AssociationLevel parse_level(const std::string& text) {
  if (text == "1" || text == "linear" || text == "Linear") return AssociationLevel::Linear;
  if (text == "2" || text == "quadratic" || text == "Quadratic") return AssociationLevel::Quadratic;
  if (text == "3" || text == "spline" || text == "Spline") return AssociationLevel::Spline;
  throw ConfigError("unknown association level '" + text + "'");
}

int coefficient_count(AssociationLevel level, int knots) {
  switch (level) {
    case AssociationLevel::Linear: return 1;
    case AssociationLevel::Quadratic: return 2;
    case AssociationLevel::Spline: return knots;
  }
  return 0;
}

Rw2Precision rw2_precision(int knot_count) {
  if (knot_count < 3) {
    throw ConfigError("invalid knot count " + std::to_string(knot_count) +
                      ": RW2 needs at least 3 knots");
  }
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(knot_count - 2, knot_count);
  for (int r = 0; r < knot_count - 2; ++r) {
    d(r, r) = 1.0;
    d(r, r + 1) = -2.0;
    d(r, r + 2) = 1.0;
  }
  return {knot_count, d.transpose() * d};
}

CenterScale center_scale_for(const Domain& domain) {
  return {0.5 * (domain.lo + domain.hi), domain.hi - domain.lo};
}

namespace {

void check_knots(std::span<const double> knots) {
  if (knots.size() < 3) throw InputError("natural cubic spline needs at least 3 knots");
  for (std::size_t i = 1; i < knots.size(); ++i) {
    if (!(knots[i] > knots[i - 1])) {
      throw InputError("spline knots must be strictly ascending");
    }
  }
}

// Standard cubic-spline segment evaluation given nodal second derivatives.
double eval_segment(std::span<const double> x, std::span<const double> y,
                    std::span<const double> m, double t) {
  const std::size_t n = x.size();
  if (t <= x[0]) {
    const double h = x[1] - x[0];
    const double slope = (y[1] - y[0]) / h - h * (2.0 * m[0] + m[1]) / 6.0;
    return y[0] + slope * (t - x[0]);
  }
  if (t >= x[n - 1]) {
    const double h = x[n - 1] - x[n - 2];
    const double slope = (y[n - 1] - y[n - 2]) / h + h * (m[n - 2] + 2.0 * m[n - 1]) / 6.0;
    return y[n - 1] + slope * (t - x[n - 1]);
  }
  const auto it = std::upper_bound(x.begin(), x.end(), t);
  const std::size_t j = static_cast<std::size_t>(it - x.begin()) - 1;
  const double h = x[j + 1] - x[j];
  const double a = (x[j + 1] - t) / h;
  const double b = (t - x[j]) / h;
  return a * y[j] + b * y[j + 1] +
         ((a * a * a - a) * m[j] + (b * b * b - b) * m[j + 1]) * h * h / 6.0;
}

}  // namespace

double natural_cubic_interp(std::span<const double> knots,
                            std::span<const double> values, double x) {
  if (knots.size() != values.size()) throw InputError("knots/values length mismatch");
  check_knots(knots);
  const std::size_t n = knots.size();
  // Thomas algorithm on the interior second derivatives.
  const std::size_t m = n - 2;
  std::vector<double> sub(m), diag(m), sup(m), rhs(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double h0 = knots[i + 1] - knots[i];
    const double h1 = knots[i + 2] - knots[i + 1];
    sub[i] = h0 / 6.0;
    diag[i] = (h0 + h1) / 3.0;
    sup[i] = h1 / 6.0;
    rhs[i] = (values[i + 2] - values[i + 1]) / h1 - (values[i + 1] - values[i]) / h0;
  }
  for (std::size_t i = 1; i < m; ++i) {
    const double w = sub[i] / diag[i - 1];
    diag[i] -= w * sup[i - 1];
    rhs[i] -= w * rhs[i - 1];
  }
  std::vector<double> second(n, 0.0);
  for (std::size_t k = m; k-- > 0;) {
    const double next = (k + 1 < m) ? second[k + 2] : 0.0;
    second[k + 1] = (rhs[k] - sup[k] * next) / diag[k];
  }
  return eval_segment(knots, values, second, x);
}

NaturalCubicInterpolator::NaturalCubicInterpolator(std::vector<double> knots)
    : knots_(std::move(knots)) {
  check_knots(knots_);
  const auto n = static_cast<Eigen::Index>(knots_.size());
  const Eigen::Index m = n - 2;
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(m, m);
  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(m, n);
  for (Eigen::Index i = 0; i < m; ++i) {
    const double h0 = knots_[i + 1] - knots_[i];
    const double h1 = knots_[i + 2] - knots_[i + 1];
    if (i > 0) a(i, i - 1) = h0 / 6.0;
    a(i, i) = (h0 + h1) / 3.0;
    if (i + 1 < m) a(i, i + 1) = h1 / 6.0;
    r(i, i) = 1.0 / h0;
    r(i, i + 1) = -1.0 / h0 - 1.0 / h1;
    r(i, i + 2) = 1.0 / h1;
  }
  second_derivative_map_ = Eigen::MatrixXd::Zero(n, n);
  second_derivative_map_.middleRows(1, m) = a.partialPivLu().solve(r);
}

Eigen::VectorXd NaturalCubicInterpolator::weights(double x) const {
  const auto n = static_cast<Eigen::Index>(knots_.size());
  Eigen::VectorXd w(n);
  std::vector<double> unit(knots_.size(), 0.0);
  std::vector<double> second(knots_.size());
  // The interpolant is linear in the values: evaluate it on each unit vector.
  for (Eigen::Index k = 0; k < n; ++k) {
    unit.assign(knots_.size(), 0.0);
    unit[k] = 1.0;
    for (Eigen::Index i = 0; i < n; ++i) second[i] = second_derivative_map_(i, k);
    w(k) = eval_segment(knots_, unit, second, x);
  }
  return w;
}

double NaturalCubicInterpolator::evaluate(const Eigen::VectorXd& values, double x) const {
  return weights(x).dot(values);
}

namespace {

Eigen::MatrixXd geometric_mean_scaled(const Eigen::MatrixXd& q) {
  // Generalized inverse restricted to the range space of Q.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(q);
  const Eigen::VectorXd& w = es.eigenvalues();
  const Eigen::MatrixXd& v = es.eigenvectors();
  const double tol = 1e-10 * w.cwiseAbs().maxCoeff();
  Eigen::MatrixXd ginv = Eigen::MatrixXd::Zero(q.rows(), q.cols());
  for (Eigen::Index k = 0; k < w.size(); ++k) {
    if (w(k) > tol) ginv += v.col(k) * v.col(k).transpose() / w(k);
  }
  double log_sum = 0.0;
  for (Eigen::Index i = 0; i < q.rows(); ++i) log_sum += std::log(ginv(i, i));
  return std::exp(log_sum / static_cast<double>(q.rows())) * q;
}

void fix_sign(Eigen::Ref<Eigen::VectorXd> v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v(i)) > 1e-12) {
      if (v(i) < 0.0) v = -v;
      return;
    }
  }
}

}  // namespace

AssociationBasis build_basis(const Rw2Precision& q, Domain domain, PrecisionScaling scaling) {
  if (!(std::isfinite(domain.lo) && std::isfinite(domain.hi)) || !(domain.lo < domain.hi)) {
    throw DomainError("degenerate association domain [" + std::to_string(domain.lo) + ", " +
                      std::to_string(domain.hi) + "]");
  }
  const int k = q.knot_count;
  AssociationBasis basis;
  basis.knot_count = k;
  basis.domain = domain;
  basis.center_scale = center_scale_for(domain);
  basis.scaling = scaling;
  basis.penalty = scaling == PrecisionScaling::GeometricMean ? geometric_mean_scaled(q.matrix)
                                                             : q.matrix;

  basis.knots.resize(k);
  for (int j = 0; j < k; ++j) {
    basis.knots[j] = domain.lo + (domain.hi - domain.lo) * j / (k - 1);
  }
  basis.knots.back() = domain.hi;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(basis.penalty);
  basis.eigenvalues = es.eigenvalues();
  basis.eigenvalues(0) = 0.0;
  basis.eigenvalues(1) = 0.0;

  basis.phi.resize(k, k);
  basis.phi.col(0).setOnes();
  for (int j = 0; j < k; ++j) basis.phi(j, 1) = -0.5 + static_cast<double>(j) / (k - 1);

  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(k);
  const Eigen::VectorXd trend = basis.phi.col(1);
  for (int c = 2; c < k; ++c) {
    Eigen::VectorXd e = es.eigenvectors().col(c);
    e -= ones * (ones.dot(e) / ones.squaredNorm());
    e -= trend * (trend.dot(e) / trend.squaredNorm());
    e.normalize();
    fix_sign(e);
    basis.phi.col(c) = e / std::sqrt(basis.eigenvalues(c));
  }
  basis.interpolator = NaturalCubicInterpolator(basis.knots);
  return basis;
}

Eigen::VectorXd scaling_design_row(AssociationLevel level, const AssociationBasis* basis,
                                   double nu) {
  switch (level) {
    case AssociationLevel::Linear: {
      Eigen::VectorXd r(1);
      r << 1.0;
      return r;
    }
    case AssociationLevel::Quadratic: {
      if (basis == nullptr) throw ConfigError("quadratic association needs a nu^s map");
      Eigen::VectorXd r(2);
      r << 1.0, basis->center_scale.apply(nu);
      return r;
    }
    case AssociationLevel::Spline: {
      if (basis == nullptr) throw ConfigError("spline association needs an AssociationBasis");
      return basis->phi.transpose() * basis->interpolator.weights(nu);
    }
  }
  throw ConfigError("unknown association level");
}

double scaling_function(const AssociationCoefficients& coef, const AssociationBasis* basis,
                        double nu) {
  const int knots = basis != nullptr ? basis->knot_count : 0;
  if (coef.level == AssociationLevel::Spline && basis == nullptr) {
    throw ConfigError("spline association needs an AssociationBasis");
  }
  const auto expected = static_cast<std::size_t>(coefficient_count(coef.level, knots));
  if (coef.gamma.size() != expected) {
    throw ConfigError("association coefficient count " + std::to_string(coef.gamma.size()) +
                      " does not match level " + to_string(coef.level));
  }
  switch (coef.level) {
    case AssociationLevel::Linear:
      return coef.gamma[0];
    case AssociationLevel::Quadratic:
      if (basis == nullptr) throw ConfigError("quadratic association needs a nu^s map");
      return coef.gamma[0] + coef.gamma[1] * basis->center_scale.apply(nu);
    case AssociationLevel::Spline: {
      const Eigen::Map<const Eigen::VectorXd> g(coef.gamma.data(),
                                               static_cast<Eigen::Index>(coef.gamma.size()));
      const Eigen::VectorXd nodal = basis->phi * g;
      return basis->interpolator.evaluate(nodal, nu);
    }
  }
  return 0.0;
}

double association_value(const AssociationCoefficients& coef, const AssociationBasis* basis,
                         double nu) {
  if (nu == 0.0) {
    // Still validates the configuration.
    (void)scaling_function(coef, basis, nu);
    return 0.0;
  }
  return scaling_function(coef, basis, nu) * nu;
}

}  // namespace jointfit
