#pragma once

#include <span>
#include <vector>

#include "jointfit/dataset.hpp"
#include "jointfit/model_spec.hpp"

namespace jointfit {

struct ExpandedRow {
  int subject = 0;       // index into the survival list
  int interval = 0;      // baseline-hazard interval
  double t_mid = 0.0;    // evaluation time of the shared components
  double exposure = 0.0; // overlap of [0, T_i] with the interval
  int count = 0;
};

/// Poisson data expansion of right-censored survival data.
struct ExpandedSurvival {
  std::vector<ExpandedRow> rows;
  std::vector<double> grid;  // interval boundaries, grid.size() - 1 intervals

  int interval_count() const { return grid.empty() ? 0 : static_cast<int>(grid.size()) - 1; }
  /// Rows of subject i are [offsets[i], offsets[i+1]).
  std::vector<std::size_t> subject_offsets(std::size_t subject_count) const;
};

ExpandedSurvival expand_survival(std::span<const SurvivalRecord> survival, int n_intervals,
                                 EvaluationPoint evaluation = EvaluationPoint::Midpoint);

}  // namespace jointfit
