#pragma once

#include <json.hpp>

#include <string>
#include <vector>

#include "jointfit/fit.hpp"
#include "jointfit/model_compare.hpp"
#include "jointfit/model_spec.hpp"
#include "jointfit/simulation.hpp"

namespace jointfit {

using Json = nlohmann::ordered_json;

Json spec_to_json(const ModelSpec& spec);
/// Missing keys take their defaults; unknown keys are rejected.
ModelSpec spec_from_json(const Json& j);
/// Default for fit commands: fixed 1 + time, random intercept + slope,
/// one current-value component at Level 1.
ModelSpec default_model_spec();

/// Deterministic content of a fit (wall time is excluded; see timing_to_json).
Json fit_to_json(const FitResult& fit);
FitResult fit_from_json(const Json& j);
Json timing_to_json(const FitResult& fit);

void write_json(const std::string& path, const Json& j);
Json read_json(const std::string& path);

/// name,mean,sd,q2.5,q97.5
void write_params_csv(const std::string& path, const FitResult& fit);
/// nu,f_mean,f_lo,f_hi followed by a density block bin_lo,bin_hi,count.
void write_curve_csv(const std::string& path, const std::vector<CurvePoint>& curve,
                     const SharedComponentSummary& summary);

struct FitComparisonEntry {
  std::string label;
  FitResult fit;
};

/// Pairwise comparison report over fits of the same dataset; throws
/// InputError on fingerprint mismatch.
Json compare_fits(const std::vector<FitComparisonEntry>& fits);
std::string comparison_table(const Json& report);

Json metrics_to_json(const ReplicationMetrics& m);
void write_metrics_csv(const std::string& path, const ReplicationMetrics& m);
/// Per-replicate raw estimates, one CSV per level.
void dump_replicates(const std::string& dir, const ReplicationMetrics& m);
Json metrics_timing_json(const ReplicationMetrics& m);

}  // namespace jointfit
