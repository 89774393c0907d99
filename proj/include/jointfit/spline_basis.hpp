#pragma once

// RW2-derived orthogonal basis for the association scaling function
// g(nu) = gamma_1 + gamma_2 nu^s + h(nu) and natural cubic interpolation of
// its nodal values.

#include <Eigen/Dense>

#include <span>
#include <string>
#include <vector>

namespace jointfit {

enum class AssociationLevel { Linear = 1, Quadratic = 2, Spline = 3 };

std::string to_string(AssociationLevel level);
AssociationLevel parse_level(const std::string& text);

/// Number of association coefficients for a level (K only matters for Spline).
int coefficient_count(AssociationLevel level, int knots);

/// Second-order random walk structure matrix Q = D^T D.
struct Rw2Precision {
  int knot_count = 0;
  Eigen::MatrixXd matrix;
};

Rw2Precision rw2_precision(int knot_count);

/// How the RW2 precision is scaled before the eigendecomposition.
/// `GeometricMean` rescales Q so the geometric mean of the generalized-inverse
/// marginal variances is 1.
enum class PrecisionScaling { None, GeometricMean };

struct Domain {
  double lo = 0.0;
  double hi = 1.0;
};

/// nu^s = (nu - center) / width, mapping the domain onto [-0.5, 0.5].
struct CenterScale {
  double center = 0.0;
  double width = 1.0;
  double apply(double nu) const { return (nu - center) / width; }
};

CenterScale center_scale_for(const Domain& domain);

/// Natural cubic spline on fixed knots. Precomputes the linear map from
/// nodal values to nodal second derivatives so that the interpolant can be
/// expressed as a weight vector acting on the values.
class NaturalCubicInterpolator {
 public:
  explicit NaturalCubicInterpolator(std::vector<double> knots);

  const std::vector<double>& knots() const { return knots_; }

  /// w such that s(x) = w . values. Linear extrapolation outside the knots.
  Eigen::VectorXd weights(double x) const;

  double evaluate(const Eigen::VectorXd& values, double x) const;

 private:
  std::vector<double> knots_;
  Eigen::MatrixXd second_derivative_map_;  // K x K, rows 0 and K-1 are zero
};

/// One-shot natural cubic interpolation (tridiagonal solve per call).
double natural_cubic_interp(std::span<const double> knots,
                            std::span<const double> values, double x);

struct AssociationBasis {
  int knot_count = 0;
  std::vector<double> knots;
  Eigen::MatrixXd phi;           // K x K; columns phi_1 .. phi_K
  Eigen::VectorXd eigenvalues;   // ascending, first two exactly zero
  Eigen::MatrixXd penalty;       // the (possibly scaled) Q that phi standardizes
  Domain domain;
  CenterScale center_scale;
  PrecisionScaling scaling = PrecisionScaling::None;
  NaturalCubicInterpolator interpolator{std::vector<double>{0.0, 0.5, 1.0}};
};

AssociationBasis build_basis(const Rw2Precision& q, Domain domain,
                             PrecisionScaling scaling = PrecisionScaling::None);

struct AssociationCoefficients {
  std::vector<double> gamma;
  AssociationLevel level = AssociationLevel::Linear;
};

/// Row r such that g(nu) = r . gamma. `basis` may be null for Level 1.
Eigen::VectorXd scaling_design_row(AssociationLevel level,
                                   const AssociationBasis* basis, double nu);

double scaling_function(const AssociationCoefficients& coef,
                        const AssociationBasis* basis, double nu);

/// f(nu) = g(nu) * nu.
double association_value(const AssociationCoefficients& coef,
                         const AssociationBasis* basis, double nu);

}  // namespace jointfit
