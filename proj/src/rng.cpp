#include "pcenet/rng.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "pcenet/errors.hpp"

namespace pcenet {

double Rng::normal() {
  // Box-Muller, one value per call; 1 - u keeps the log argument positive.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::string Rng::state() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

void Rng::set_state(const std::string& s) {
  std::istringstream is(s);
  is >> engine_;
  if (!is) throw FormatError("malformed RNG state");
}

}  // namespace pcenet
