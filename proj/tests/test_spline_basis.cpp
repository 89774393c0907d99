#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "jointfit/error.hpp"
#include "jointfit/spline_basis.hpp"

using namespace jointfit;

namespace {

// Natural cubic spline from the full piecewise-cubic system solved densely;
// unknowns are the cubic coefficients of every segment.
double dense_spline(const std::vector<double>& x, const std::vector<double>& y, double t) {
  const int n = static_cast<int>(x.size());
  const int segs = n - 1;
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(4 * segs, 4 * segs);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(4 * segs);
  int row = 0;
  // s_i(u) = c0 + c1 u + c2 u^2 + c3 u^3 with u = t - x_i.
  for (int i = 0; i < segs; ++i) {
    const double h = x[i + 1] - x[i];
    a(row, 4 * i) = 1.0;
    b(row++) = y[i];
    a(row, 4 * i) = 1.0;
    a(row, 4 * i + 1) = h;
    a(row, 4 * i + 2) = h * h;
    a(row, 4 * i + 3) = h * h * h;
    b(row++) = y[i + 1];
  }
  for (int i = 0; i + 1 < segs; ++i) {
    const double h = x[i + 1] - x[i];
    a(row, 4 * i + 1) = 1.0;
    a(row, 4 * i + 2) = 2 * h;
    a(row, 4 * i + 3) = 3 * h * h;
    a(row++, 4 * (i + 1) + 1) = -1.0;
    a(row, 4 * i + 2) = 2.0;
    a(row, 4 * i + 3) = 6 * h;
    a(row++, 4 * (i + 1) + 2) = -2.0;
  }
  a(row++, 2) = 2.0;
  const double hl = x[n - 1] - x[n - 2];
  a(row, 4 * (segs - 1) + 2) = 2.0;
  a(row++, 4 * (segs - 1) + 3) = 6 * hl;
  const Eigen::VectorXd c = a.fullPivLu().solve(b);
  auto eval = [&](int i, double u) {
    return c(4 * i) + c(4 * i + 1) * u + c(4 * i + 2) * u * u + c(4 * i + 3) * u * u * u;
  };
  auto deriv = [&](int i, double u) { return c(4 * i + 1) + 2 * c(4 * i + 2) * u + 3 * c(4 * i + 3) * u * u; };
  if (t < x[0]) return y[0] + deriv(0, 0.0) * (t - x[0]);
  if (t > x[n - 1]) return y[n - 1] + deriv(segs - 1, hl) * (t - x[n - 1]);
  int i = 0;
  while (i + 1 < segs && t > x[i + 1]) ++i;
  return eval(i, t - x[i]);
}

AssociationBasis basis_for(int k, Domain d = {-2.0, 3.0}) { return build_basis(rw2_precision(k), d); }

}  // namespace

TEST_CASE("rw2 precision for K=5 has diagonal 1,5,6,5,1 and annihilates lines") {
  const Rw2Precision q = rw2_precision(5);
  const Eigen::VectorXd diag = q.matrix.diagonal();
  CHECK(diag(0) == 1.0);
  CHECK(diag(1) == 5.0);
  CHECK(diag(2) == 6.0);
  CHECK(diag(3) == 5.0);
  CHECK(diag(4) == 1.0);
  CHECK(q.matrix(0, 1) == -2.0);
  CHECK(q.matrix(0, 2) == 1.0);
  Eigen::VectorXd line(5);
  line << 1, 3, 5, 7, 9;
  CHECK((q.matrix * line).norm() < 1e-14);
  CHECK((q.matrix * Eigen::VectorXd::Ones(5)).norm() < 1e-14);
}

TEST_CASE("rw2 precision rejects fewer than three knots") {
  CHECK_THROWS_AS(rw2_precision(2), ConfigError);
}

TEST_CASE("natural cubic interpolation matches dense-system oracle") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int n : {3, 4, 6, 9}) {
    std::vector<double> x(n), y(n);
    double pos = -1.3;
    for (int i = 0; i < n; ++i) {
      pos += 0.2 + std::abs(u(rng));
      x[i] = pos;
      y[i] = u(rng) * 3.0;
    }
    NaturalCubicInterpolator interp(x);
    Eigen::Map<Eigen::VectorXd> yv(y.data(), n);
    for (int s = 0; s <= 60; ++s) {
      const double t = x.front() - 0.5 + (x.back() - x.front() + 1.0) * s / 60.0;
      const double oracle = dense_spline(x, y, t);
      CHECK(natural_cubic_interp(x, y, t) == doctest::Approx(oracle).epsilon(1e-11));
      CHECK(interp.evaluate(yv, t) == doctest::Approx(oracle).epsilon(1e-11));
    }
  }
}

TEST_CASE("interpolator reproduces nodal values and straight lines") {
  const std::vector<double> x{0.0, 0.7, 1.1, 2.5, 4.0};
  NaturalCubicInterpolator interp(x);
  for (std::size_t k = 0; k < x.size(); ++k) {
    const Eigen::VectorXd w = interp.weights(x[k]);
    for (Eigen::Index j = 0; j < w.size(); ++j) CHECK(w(j) == doctest::Approx(j == static_cast<Eigen::Index>(k) ? 1.0 : 0.0).epsilon(1e-12));
  }
  Eigen::VectorXd line(5);
  for (int k = 0; k < 5; ++k) line(k) = 2.0 - 0.5 * x[k];
  for (double t : {-1.0, 0.3, 2.0, 3.9, 6.0}) CHECK(interp.evaluate(line, t) == doctest::Approx(2.0 - 0.5 * t).epsilon(1e-12));
}

TEST_CASE("unsorted knots are rejected") {
  const std::vector<double> x{0.0, 2.0, 1.0};
  const std::vector<double> y{0.0, 1.0, 2.0};
  CHECK_THROWS_AS(natural_cubic_interp(x, y, 0.5), InputError);
}

TEST_CASE("basis has two exact zero eigenvalues and a unit penalty on deviations") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n01;
  for (int k = 4; k <= 10; ++k) {
    for (auto scaling : {PrecisionScaling::None, PrecisionScaling::GeometricMean}) {
      const AssociationBasis b = build_basis(rw2_precision(k), {-1.0, 4.0}, scaling);
      CHECK(b.eigenvalues(0) == 0.0);
      CHECK(b.eigenvalues(1) == 0.0);
      for (int j = 2; j < k; ++j) CHECK(b.eigenvalues(j) > 1e-6);
      CHECK((b.phi.col(0) - Eigen::VectorXd::Ones(k)).norm() == 0.0);
      CHECK(b.phi(0, 1) == -0.5);
      CHECK(b.phi(k - 1, 1) == 0.5);
      for (int rep = 0; rep < 5; ++rep) {
        Eigen::VectorXd g(k);
        for (int j = 0; j < k; ++j) g(j) = n01(rng);
        const double pen = g.dot(b.phi.transpose() * b.penalty * b.phi * g);
        const double ss = g.tail(k - 2).squaredNorm();
        CHECK(std::abs(pen - ss) < 1e-9);
      }
    }
  }
}

TEST_CASE("deviation columns are sign-fixed and orthogonal to the null space") {
  const AssociationBasis b = basis_for(7);
  for (int c = 2; c < 7; ++c) {
    const Eigen::VectorXd v = b.phi.col(c);
    CHECK(std::abs(v.sum()) < 1e-10);
    CHECK(std::abs(v.dot(b.phi.col(1))) < 1e-10);
    int first = 0;
    while (std::abs(v(first)) <= 1e-12) ++first;
    CHECK(v(first) > 0.0);
  }
}

TEST_CASE("knots are equidistant over the domain and nu^s maps it onto [-0.5, 0.5]") {
  const AssociationBasis b = basis_for(5, {-2.0, 6.0});
  CHECK(b.knots.front() == -2.0);
  CHECK(b.knots.back() == 6.0);
  CHECK(b.knots[2] == doctest::Approx(2.0));
  CHECK(b.center_scale.apply(-2.0) == doctest::Approx(-0.5));
  CHECK(b.center_scale.apply(6.0) == doctest::Approx(0.5));
  CHECK(b.center_scale.apply(2.0) == doctest::Approx(0.0));
}

TEST_CASE("degenerate domain is a domain error") {
  CHECK_THROWS_AS(build_basis(rw2_precision(5), {1.0, 1.0}), DomainError);
  CHECK_THROWS_AS(build_basis(rw2_precision(5), {2.0, 1.0}), DomainError);
}

TEST_CASE("level 3 with zero deviations equals level 2 on a 201-point grid") {
  for (int k = 4; k <= 10; ++k) {
    const AssociationBasis b = basis_for(k, {-3.0, 5.0});
    AssociationCoefficients l2{{0.4, -1.3}, AssociationLevel::Quadratic};
    AssociationCoefficients l3{std::vector<double>(static_cast<std::size_t>(k), 0.0), AssociationLevel::Spline};
    l3.gamma[0] = 0.4;
    l3.gamma[1] = -1.3;
    for (int i = 0; i <= 200; ++i) {
      const double nu = -3.0 - 1.6 + (8.0 + 3.2) * i / 200.0;
      CHECK(std::abs(scaling_function(l2, &b, nu) - scaling_function(l3, &b, nu)) < 1e-10);
    }
  }
}

TEST_CASE("level 1 scaling is the constant gamma_1") {
  AssociationCoefficients c{{0.5}, AssociationLevel::Linear};
  CHECK(scaling_function(c, nullptr, -4.0) == 0.5);
  CHECK(association_value(c, nullptr, 2.0) == 1.0);
}

TEST_CASE("association value is anchored at zero for every level") {
  const AssociationBasis b = basis_for(5);
  AssociationCoefficients c1{{0.3}, AssociationLevel::Linear};
  AssociationCoefficients c2{{0.3, 2.0}, AssociationLevel::Quadratic};
  AssociationCoefficients c3{{0.3, 2.0, -1.0, 0.5, 4.0}, AssociationLevel::Spline};
  CHECK(association_value(c1, nullptr, 0.0) == 0.0);
  CHECK(association_value(c2, &b, 0.0) == 0.0);
  CHECK(association_value(c3, &b, 0.0) == 0.0);
}

TEST_CASE("coefficient mismatch and missing basis are configuration errors") {
  const AssociationBasis b = basis_for(5);
  AssociationCoefficients bad{{0.3, 2.0, 1.0}, AssociationLevel::Spline};
  CHECK_THROWS_AS(scaling_function(bad, &b, 1.0), ConfigError);
  AssociationCoefficients c3{{0.3, 2.0, -1.0, 0.5, 4.0}, AssociationLevel::Spline};
  CHECK_THROWS_AS(scaling_function(c3, nullptr, 1.0), ConfigError);
  AssociationCoefficients c2{{0.3, 2.0}, AssociationLevel::Quadratic};
  CHECK_THROWS_AS(scaling_function(c2, nullptr, 1.0), ConfigError);
}

TEST_CASE("level parsing and coefficient counts") {
  CHECK(parse_level("1") == AssociationLevel::Linear);
  CHECK(parse_level("quadratic") == AssociationLevel::Quadratic);
  CHECK(parse_level("Spline") == AssociationLevel::Spline);
  CHECK_THROWS_AS(parse_level("cubic"), ConfigError);
  CHECK(coefficient_count(AssociationLevel::Spline, 7) == 7);
  CHECK(coefficient_count(AssociationLevel::Quadratic, 7) == 2);
}

TEST_CASE("design row reproduces the scaling function") {
  const AssociationBasis b = basis_for(6);
  AssociationCoefficients c{{0.2, -0.4, 0.1, 0.3, -0.2, 0.05}, AssociationLevel::Spline};
  const Eigen::Map<const Eigen::VectorXd> g(c.gamma.data(), 6);
  for (double nu : {-2.5, -1.0, 0.7, 3.0, 3.6}) {
    CHECK(scaling_design_row(AssociationLevel::Spline, &b, nu).dot(g) ==
          doctest::Approx(scaling_function(c, &b, nu)).epsilon(1e-12));
  }
}
