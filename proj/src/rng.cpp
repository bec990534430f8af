#include "selfdocseg/rng.hpp"

#include <sstream>

namespace selfdocseg {

std::string Rng::serialize() const {
  std::ostringstream os;
  os << eng_;
  return os.str();
}

Rng Rng::deserialize(const std::string& s) {
  Rng r;
  std::istringstream is(s);
  is >> r.eng_;
  return r;
}

}  // namespace selfdocseg
