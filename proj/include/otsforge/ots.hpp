#pragma once

#include <limits>

#include "otsforge/dispatch.hpp"

namespace otsforge {

enum class OtsMode { BranchAndBound, Exhaustive };

struct OtsBudget {
  double time_limit_s = std::numeric_limits<double>::infinity();
  long node_limit = std::numeric_limits<long>::max();
};

struct OtsOptions {
  OtsMode mode = OtsMode::BranchAndBound;
  OtsBudget budget;
  // Upper bound on the number of opened lines; negative disables it.
  int max_open_lines = -1;
  DispatchOptions dispatch;
  // Exhaustive enumeration refuses networks larger than this.
  int exhaustive_line_cap = 24;
};

struct OtsSolution {
  SwitchVector z;
  DispatchSolution dispatch;
  double objective = 0.0;
  long nodes_explored = 0;
  bool proved_optimal = false;
  double root_bound = -std::numeric_limits<double>::infinity();
  double seconds = 0.0;
};

// Exact DC optimal transmission switching. Exhaustive enumerates every
// topology; BranchAndBound works on the big-M relaxation
//   |f_l - b_l (C theta)_l| <= M_l (1 - z_l),  z_l p_min <= f_l <= z_l p_max
// with M_l = b_l * (largest angle difference allowed across line l).
OtsSolution solve_ots_exact(const Network& net, const Vec& demand, const OtsOptions& opts = {});

// Node relaxation used by branch and bound, exposed for bound checks.
// fixed[l] is -1 (free), 0, or 1. Returns the relaxed objective and z.
struct OtsRelaxation {
  QpStatus status = QpStatus::MaxIter;
  double objective = std::numeric_limits<double>::infinity();
  Vec z;
};

OtsRelaxation solve_ots_relaxation(const Network& net, const Vec& demand, const std::vector<int>& fixed,
                                   const OtsOptions& opts = {});

}  // namespace otsforge
