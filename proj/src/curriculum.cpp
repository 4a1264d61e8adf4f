#include "lumos/curriculum.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace lumos {

Schedule default_schedule(const Schema& schema, int total_iterations) {
  Schedule s;
  s.total_iterations = total_iterations;
  const int n = schema.level_count();
  for (int k = n - 1; k >= 0; --k) s.levels.push_back(k);
  for (int k = 1; k <= n; ++k) s.boundaries.push_back((double)k / n);
  return s;
}

void validate_schedule(const Schedule& s) {
  if (s.total_iterations <= 0)
    throw std::invalid_argument("schedule: total_iterations must be positive");
  if (s.boundaries.empty() || s.boundaries.size() != s.levels.size())
    throw std::invalid_argument("schedule: need one boundary per stage level");
  double prev = 0.0;
  for (double b : s.boundaries) {
    if (!(b > prev) || b > 1.0)
      throw std::invalid_argument(
          "schedule: boundaries must be strictly increasing in (0, 1]");
    prev = b;
  }
  if (s.boundaries.back() != 1.0)
    throw std::invalid_argument("schedule: last boundary must be 1.0");
  for (size_t k = 1; k < s.levels.size(); ++k)
    if (s.levels[k] > s.levels[k - 1])
      throw std::invalid_argument("schedule: levels must move coarse to fine");
  if (s.levels.back() != 0)
    throw std::invalid_argument("schedule: last stage must be the base level");
}

int target_level(int iteration, const Schedule& s) {
  if (iteration < 0 || iteration >= s.total_iterations)
    throw std::out_of_range("schedule: iteration " + std::to_string(iteration) +
                            " outside [0, " + std::to_string(s.total_iterations) + ")");
  const double frac = (double)iteration / s.total_iterations;
  for (size_t k = 0; k < s.boundaries.size(); ++k)
    if (frac < s.boundaries[k]) return s.levels[k];
  return s.levels.back();
}

double poly_lr(int iteration, const Schedule& s) {
  if (iteration < 0 || iteration > s.total_iterations)
    throw std::out_of_range("schedule: iteration out of range for lr");
  const double t = 1.0 - (double)iteration / s.total_iterations;
  return s.base_lr * std::pow(t, s.power);
}

}  // namespace lumos
