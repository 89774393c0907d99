#include "jointfit/design.hpp"

#include <cmath>

#include "jointfit/error.hpp"

namespace jointfit {

namespace {

double lookup(const Covariates& c, const std::string& name, const std::string& where) {
  const auto it = c.find(name);
  if (it == c.end()) throw InputError("missing covariate column '" + name + "' in " + where);
  if (!std::isfinite(it->second)) {
    throw InputError("covariate column '" + name + "' has a missing value in " + where);
  }
  return it->second;
}

// Covariates of subject i at time t: last longitudinal record at or before t
// (first record if none), falling back to the survival record.
const Covariates& covariates_at(const JointDataset& data, std::size_t subject, double t,
                                const std::string& name) {
  const auto& offsets = data.subject_offsets();
  const auto& recs = data.longitudinal();
  const std::size_t begin = offsets[subject];
  const std::size_t end = offsets[subject + 1];
  if (begin == end || recs[begin].covariates.count(name) == 0) {
    return data.survival()[subject].covariates;
  }
  std::size_t pick = begin;
  for (std::size_t r = begin; r < end && recs[r].t <= t; ++r) pick = r;
  return recs[pick].covariates;
}

}  // namespace

DesignMatrices design_matrices(const ModelSpec& spec, const JointDataset& data,
                               const ExpandedSurvival& expanded) {
  const auto& recs = data.longitudinal();
  const auto p = static_cast<Eigen::Index>(spec.fixed_effects.size());
  const auto q = static_cast<Eigen::Index>(spec.random_effects.dimension());
  const auto r = static_cast<Eigen::Index>(spec.survival_covariates.size());
  const auto n = static_cast<Eigen::Index>(recs.size());
  const auto rows = static_cast<Eigen::Index>(expanded.rows.size());
  const auto nsub = static_cast<Eigen::Index>(data.subject_count());

  DesignMatrices d;
  d.x.resize(n, p);
  d.z.resize(n, q);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& rec = recs[i];
    for (Eigen::Index j = 0; j < p; ++j) {
      const auto& term = spec.fixed_effects[j];
      const double cv = term.covariate.empty()
                            ? 1.0
                            : lookup(rec.covariates, term.covariate,
                                     "longitudinal row " + std::to_string(i + 1) +
                                         " (subject " + rec.subject_id + ")");
      d.x(i, j) = term.value(cv, rec.t);
    }
    Eigen::Index c = 0;
    if (spec.random_effects.intercept) d.z(i, c++) = 1.0;
    if (spec.random_effects.slope) d.z(i, c++) = rec.t;
  }

  d.w.resize(nsub, r);
  for (Eigen::Index i = 0; i < nsub; ++i) {
    const auto& s = data.survival()[i];
    for (Eigen::Index j = 0; j < r; ++j) {
      d.w(i, j) = lookup(s.covariates, spec.survival_covariates[j],
                         "survival row " + std::to_string(i + 1) + " (subject " + s.subject_id + ")");
    }
  }

  d.x_mid.resize(rows, p);
  d.dx_mid.resize(rows, p);
  d.z_mid.resize(rows, q);
  d.dz_mid.resize(rows, q);
  for (Eigen::Index k = 0; k < rows; ++k) {
    const auto& row = expanded.rows[k];
    const auto subject = static_cast<std::size_t>(row.subject);
    for (Eigen::Index j = 0; j < p; ++j) {
      const auto& term = spec.fixed_effects[j];
      double cv = 1.0;
      if (!term.covariate.empty()) {
        const auto& cov = covariates_at(data, subject, row.t_mid, term.covariate);
        cv = lookup(cov, term.covariate, "subject " + data.survival()[subject].subject_id);
      }
      d.x_mid(k, j) = term.value(cv, row.t_mid);
      d.dx_mid(k, j) = term.derivative(cv);
    }
    Eigen::Index c = 0;
    if (spec.random_effects.intercept) {
      d.z_mid(k, c) = 1.0;
      d.dz_mid(k, c) = 0.0;
      ++c;
    }
    if (spec.random_effects.slope) {
      d.z_mid(k, c) = row.t_mid;
      d.dz_mid(k, c) = 1.0;
    }
  }
  return d;
}

}  // namespace jointfit
