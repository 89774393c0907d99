#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

namespace jointfit {

using Covariates = std::map<std::string, double>;

struct LongitudinalRecord {
  std::string subject_id;
  double t = 0.0;
  double y = 0.0;
  Covariates covariates;
};

struct SurvivalRecord {
  std::string subject_id;
  double time = 0.0;
  int event = 0;
  Covariates covariates;
};

/// Validated longitudinal + survival data. Subject index i refers to
/// survival[i]; longitudinal records are sorted by (subject index, t).
class JointDataset {
 public:
  const std::vector<LongitudinalRecord>& longitudinal() const { return longitudinal_; }
  const std::vector<SurvivalRecord>& survival() const { return survival_; }
  const std::map<std::string, int>& subject_index() const { return subject_index_; }

  std::size_t subject_count() const { return survival_.size(); }
  /// Subject index of each longitudinal record.
  const std::vector<int>& record_subject() const { return record_subject_; }
  /// Longitudinal records of subject i are [offsets[i], offsets[i+1]).
  const std::vector<std::size_t>& subject_offsets() const { return offsets_; }

  /// Content hash of the validated data (FNV-1a over a canonical rendering).
  std::string fingerprint() const;

  friend JointDataset validate_and_join(std::vector<LongitudinalRecord> longitudinal,
                                        std::vector<SurvivalRecord> survival);

 private:
  std::vector<LongitudinalRecord> longitudinal_;
  std::vector<SurvivalRecord> survival_;
  std::map<std::string, int> subject_index_;
  std::vector<int> record_subject_;
  std::vector<std::size_t> offsets_;
};

JointDataset validate_and_join(std::vector<LongitudinalRecord> longitudinal,
                               std::vector<SurvivalRecord> survival);

// CSV interchange. Longitudinal header: id,time,y,<covariates...>;
// survival header: id,time,event,<covariates...>. Covariate cells that are
// empty or non-numeric are stored as NaN and rejected only when modeled.
std::vector<LongitudinalRecord> read_longitudinal_csv(const std::string& path);
std::vector<SurvivalRecord> read_survival_csv(const std::string& path);
void write_longitudinal_csv(const std::string& path,
                            const std::vector<LongitudinalRecord>& records);
void write_survival_csv(const std::string& path, const std::vector<SurvivalRecord>& records);

}  // namespace jointfit
