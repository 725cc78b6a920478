#include "longsim/diagnostics.hpp"

namespace longsim {

void Diagnostics::warn(std::string message) {
  std::lock_guard lock(mu_);
  warnings_.push_back(std::move(message));
}

std::vector<std::string> Diagnostics::warnings() const {
  std::lock_guard lock(mu_);
  return warnings_;
}

std::size_t Diagnostics::count() const {
  std::lock_guard lock(mu_);
  return warnings_.size();
}

}  // namespace longsim
