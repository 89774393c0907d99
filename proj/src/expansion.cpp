#include "jointfit/expansion.hpp"

#include <algorithm>
#include <cmath>

#include "jointfit/error.hpp"

namespace jointfit {

std::vector<std::size_t> ExpandedSurvival::subject_offsets(std::size_t subject_count) const {
  std::vector<std::size_t> offsets(subject_count + 1, 0);
  for (const auto& r : rows) ++offsets[static_cast<std::size_t>(r.subject) + 1];
  for (std::size_t i = 1; i < offsets.size(); ++i) offsets[i] += offsets[i - 1];
  return offsets;
}

ExpandedSurvival expand_survival(std::span<const SurvivalRecord> survival, int n_intervals,
                                 EvaluationPoint evaluation) {
  if (n_intervals < 1) throw ConfigError("expand_survival needs at least one interval");
  ExpandedSurvival out;
  if (survival.empty()) return out;
  double horizon = 0.0;
  for (std::size_t i = 0; i < survival.size(); ++i) {
    if (!(survival[i].time > 0.0) || !std::isfinite(survival[i].time)) {
      throw InputError("subject " + survival[i].subject_id + ": nonpositive follow-up time");
    }
    horizon = std::max(horizon, survival[i].time);
  }
  out.grid.resize(static_cast<std::size_t>(n_intervals) + 1);
  for (int k = 0; k <= n_intervals; ++k) out.grid[k] = horizon * k / n_intervals;
  out.grid.back() = horizon;

  for (std::size_t i = 0; i < survival.size(); ++i) {
    const double end = survival[i].time;
    const std::size_t first_row = out.rows.size();
    for (int k = 0; k < n_intervals; ++k) {
      const double a = out.grid[k];
      if (a >= end) break;
      const double b = std::min(out.grid[k + 1], end);
      const double exposure = b - a;
      if (exposure <= 1e-12 * horizon) continue;
      ExpandedRow row;
      row.subject = static_cast<int>(i);
      row.interval = k;
      row.t_mid = evaluation == EvaluationPoint::Midpoint ? 0.5 * (a + b) : a;
      row.exposure = exposure;
      out.rows.push_back(row);
    }
    if (out.rows.size() == first_row) {
      throw InputError("subject " + survival[i].subject_id + ": follow-up too short for the grid");
    }
    // Sliver intervals dropped above are folded into the last row so the
    // exposure sum stays exact.
    double total = 0.0;
    for (std::size_t r = first_row; r < out.rows.size(); ++r) total += out.rows[r].exposure;
    out.rows.back().exposure += end - total;
    out.rows.back().count = survival[i].event;
  }
  return out;
}

}  // namespace jointfit
