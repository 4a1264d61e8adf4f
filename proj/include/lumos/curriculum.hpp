#pragma once

#include <vector>

#include "lumos/granularity.hpp"

namespace lumos {

// Training schedule: which granularity level the consistency target uses at
// each iteration, and the decayed learning rate.
struct Schedule {
  int total_iterations = 2000;
  // stage end fractions, strictly increasing, last == 1.0
  std::vector<double> boundaries;
  // schema level indices visited coarse to fine; must end at the base level
  std::vector<int> levels;
  double base_lr = 3e-4;
  double power = 0.9;
};

// Default: every schema level coarse to fine, equal-length stages.
Schedule default_schedule(const Schema& schema, int total_iterations = 2000);

// Throws if boundaries are not strictly increasing in (0,1] ending at 1,
// if the stage and level counts disagree, or if the last level is not base.
void validate_schedule(const Schedule& s);

// Piecewise-constant stage lookup. iteration must be in [0, total).
int target_level(int iteration, const Schedule& s);

// base_lr * (1 - iteration/total)^power
double poly_lr(int iteration, const Schedule& s);

}  // namespace lumos
