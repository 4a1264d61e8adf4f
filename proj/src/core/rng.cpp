#include "lumos/core/rng.hpp"

#include <cmath>
#include <sstream>

namespace lumos {

double Rng::normal(double mean, double stddev) {
  // u1 in (0, 1] so the log is finite
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  return mean + stddev * r * std::cos(2.0 * M_PI * u2);
}

std::string Rng::save_state() const {
  std::ostringstream os;
  os << eng_;
  return os.str();
}

void Rng::load_state(const std::string& s) {
  std::istringstream is(s);
  is >> eng_;
}

uint64_t Rng::derive(uint64_t seed, uint64_t index) {
  uint64_t z = seed + 0x9e3779b97f4a7c15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace lumos
