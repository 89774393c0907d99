#pragma once

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "jointfit/block_arrow.hpp"
#include "jointfit/dataset.hpp"
#include "jointfit/design.hpp"
#include "jointfit/expansion.hpp"
#include "jointfit/model_spec.hpp"
#include "jointfit/spline_basis.hpp"

namespace jointfit {

/// Flattened latent vector order: [b_0 .. b_{N-1} | beta | phi | log_baseline].
struct LatentLayout {
  int subjects = 0;
  int local = 0;           // random effects per subject
  int fixed = 0;           // beta
  int survival_fixed = 0;  // phi
  int baseline = 0;        // log-baseline values, one per interval

  int global() const { return fixed + survival_fixed + baseline; }
  int dim() const { return subjects * local + global(); }
  int beta_offset() const { return subjects * local; }
  int phi_offset() const { return beta_offset() + fixed; }
  int baseline_offset() const { return phi_offset() + survival_fixed; }
};

struct LatentField {
  Eigen::VectorXd beta;
  Eigen::MatrixXd b;  // subjects x local
  Eigen::VectorXd phi;
  Eigen::VectorXd log_baseline;

  static LatentField unpack(const LatentLayout& layout, const Eigen::VectorXd& u);
  Eigen::VectorXd pack(const LatentLayout& layout) const;
};

/// Hyperparameter vector order: [log tau_e | sigma_b params | log tau_baseline
/// (when the baseline has >= 3 intervals) | gamma of each component].
/// sigma_b params are (log sigma_b0, log sigma_b1, atanh rho) for two random
/// effects and log sigma_b for one.
struct HyperLayout {
  int random_dim = 0;
  bool has_baseline_precision = false;
  std::vector<int> gamma_offset;
  std::vector<int> gamma_size;
  std::vector<AssociationLevel> gamma_level;

  int log_tau_e() const { return 0; }
  int sigma_b_begin() const { return 1; }
  int sigma_b_count() const { return random_dim == 2 ? 3 : random_dim; }
  int log_tau_baseline() const {
    return has_baseline_precision ? sigma_b_begin() + sigma_b_count() : -1;
  }
  int gamma_begin() const {
    return sigma_b_begin() + sigma_b_count() + (has_baseline_precision ? 1 : 0);
  }
  int dim() const;
  std::vector<std::string> names(const std::vector<AssociationComponent>& components) const;
};

struct HyperVector {
  double log_tau_e = 0.0;
  Eigen::VectorXd sigma_b_params;
  std::optional<double> log_tau_baseline;
  std::vector<Eigen::VectorXd> gamma;

  static HyperVector unpack(const HyperLayout& layout, const Eigen::VectorXd& theta);
  Eigen::VectorXd pack(const HyperLayout& layout) const;
};

/// Random-effects covariance from its internal parameterization.
Eigen::MatrixXd random_effects_covariance(int random_dim, const Eigen::VectorXd& params);

struct ComponentCalibration {
  AssociationComponent component;
  std::vector<double> nu_tilde;  // posterior-mean shared component per expanded row
  Domain domain;
  std::vector<double> knots;
  std::optional<AssociationBasis> basis;
};

struct Calibration {
  std::vector<ComponentCalibration> components;
};

/// Calibration record for given nu-tilde values: sets the domain to their
/// range and builds the RW2 basis for non-linear components.
ComponentCalibration make_component_calibration(const AssociationComponent& component,
                                                std::vector<double> nu_tilde,
                                                PrecisionScaling scaling);

struct DensityTerms {
  double longitudinal = 0.0;
  double survival = 0.0;
  double prior_fixed = 0.0;
  double prior_random = 0.0;
  double prior_baseline = 0.0;
  double total() const {
    return longitudinal + survival + prior_fixed + prior_random + prior_baseline;
  }
};

/// Latent Gaussian formulation of the joint model for one dataset, spec and
/// calibration. The association weights g(nu-tilde; gamma) are fixed given
/// theta, so the survival linear predictor is linear in the latent field.
class JointModel {
 public:
  JointModel(const JointDataset& data, const ModelSpec& spec,
             const Calibration* calibration = nullptr);
  JointModel(const JointDataset& data, const ModelSpec& spec, ExpandedSurvival expanded,
             const Calibration* calibration = nullptr);

  const ModelSpec& spec() const { return spec_; }
  const LatentLayout& layout() const { return layout_; }
  const HyperLayout& hyper_layout() const { return hyper_; }
  const ExpandedSurvival& expanded() const { return expanded_; }
  const DesignMatrices& design() const { return design_; }
  std::size_t n_longitudinal() const { return y_.size(); }
  std::size_t n_survival_rows() const { return expanded_.rows.size(); }
  std::size_t n_observations() const { return n_longitudinal() + n_survival_rows(); }
  const Eigen::VectorXd& y() const { return y_; }

  const AssociationBasis* basis(int component) const;
  /// Association design row block: g(nu-tilde_r) = design.row(r) . gamma_c.
  const RowMatrix& association_design(int component) const { return assoc_design_[component]; }

  DensityTerms log_density_terms(const Eigen::VectorXd& u, const Eigen::VectorXd& theta) const;
  /// Sum of density terms; EvaluationError naming the term when non-finite.
  double log_density(const Eigen::VectorXd& u, const Eigen::VectorXd& theta) const;
  Eigen::VectorXd gradient(const Eigen::VectorXd& u, const Eigen::VectorXd& theta) const;
  BlockArrowMatrix negative_hessian(const Eigen::VectorXd& u, const Eigen::VectorXd& theta) const;

  double log_hyperprior(const Eigen::VectorXd& theta) const;

  /// Log-density of every observation: longitudinal records first, then
  /// expanded survival rows.
  void pointwise_loglik(const Eigen::VectorXd& u, const Eigen::VectorXd& theta,
                        std::span<double> out) const;

  /// Shared component nu_c(u) at every expanded row.
  Eigen::VectorXd shared_component(const Eigen::VectorXd& u, int component) const;

  Eigen::VectorXd initial_theta() const;

 private:
  struct ThetaState;
  ThetaState theta_state(const Eigen::VectorXd& theta) const;
  void survival_predictor(const Eigen::VectorXd& u, const ThetaState& s,
                          Eigen::VectorXd& eta) const;

  ModelSpec spec_;
  LatentLayout layout_;
  HyperLayout hyper_;
  ExpandedSurvival expanded_;
  DesignMatrices design_;
  Eigen::VectorXd y_;
  std::vector<int> record_subject_;
  std::vector<std::size_t> record_offsets_;
  std::vector<std::size_t> row_offsets_;
  Eigen::VectorXd log_exposure_;
  std::vector<std::optional<AssociationBasis>> bases_;
  std::vector<RowMatrix> assoc_design_;
  Eigen::MatrixXd xtx_;         // p x p
  Eigen::MatrixXd ztz_;         // q x (N q)
  Eigen::MatrixXd ztx_;         // q x (N p)
  Eigen::MatrixXd rw2_;         // J x J structure matrix (empty when J < 3)
  double rw2_log_pdet_ = 0.0;
};

}  // namespace jointfit
