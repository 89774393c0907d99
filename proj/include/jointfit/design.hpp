#pragma once

#include <Eigen/Dense>

#include "jointfit/dataset.hpp"
#include "jointfit/expansion.hpp"
#include "jointfit/model_spec.hpp"

namespace jointfit {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct DesignMatrices {
  RowMatrix x;        // longitudinal fixed design, one row per measurement
  RowMatrix z;        // random-effect design (columns: intercept, time)
  RowMatrix w;        // survival baseline design, one row per subject
  RowMatrix x_mid;    // fixed design at expanded-row evaluation times
  RowMatrix z_mid;
  RowMatrix dx_mid;   // d/dt of the fixed design at expanded rows
  RowMatrix dz_mid;
};

DesignMatrices design_matrices(const ModelSpec& spec, const JointDataset& data,
                               const ExpandedSurvival& expanded);

}  // namespace jointfit
