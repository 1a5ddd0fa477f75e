#pragma once

#include <cstdint>
#include <limits>
#include <vector>

namespace dba {

/// Per-iteration metrics shared by both solvers. Fields that do not apply
/// (primal residuals and message counts for LM, MSE without a reference) are
/// left at their defaults.
struct IterationRecord {
  int iter = 0;
  double mean_reproj_err = std::numeric_limits<double>::infinity();
  double max_primal_x = 0.0;  ///< max ||x_i^j - x_i|| over point copies
  double max_primal_y = 0.0;  ///< max ||y_j^i - y_j|| over camera copies
  double camera_mse = std::numeric_limits<double>::quiet_NaN();
  double point_mse = std::numeric_limits<double>::quiet_NaN();
  double wall_ms = 0.0;
  std::int64_t comm_floats = 0;  ///< simulated floats exchanged this iteration
};

using Trace = std::vector<IterationRecord>;

}  // namespace dba
