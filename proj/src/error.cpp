#include "igb/error.hpp"

#include <sstream>
#include <utility>

namespace igb {

namespace {

std::string join_violations(const std::vector<std::string>& v) {
  std::ostringstream os;
  os << "invalid configuration";
  for (const auto& s : v) os << "\n  - " << s;
  return os.str();
}

std::string divergence_message(std::size_t step, double loss) {
  std::ostringstream os;
  os << "training diverged at step " << step << " (loss = " << loss << ")";
  return os.str();
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> violations)
    : Error(join_violations(violations)), violations_(std::move(violations)) {}

DivergenceError::DivergenceError(std::size_t step, double loss)
    : Error(divergence_message(step, loss)), step_(step), loss_(loss) {}

}  // namespace igb
