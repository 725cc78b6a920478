#pragma once

#include <mutex>
#include <string>
#include <vector>

namespace longsim {

// Collects non-fatal warnings raised while preparing or running a pipeline.
// Thread-safe; operations take an optional pointer and stay silent when null.
class Diagnostics {
 public:
  void warn(std::string message);
  std::vector<std::string> warnings() const;
  std::size_t count() const;

 private:
  mutable std::mutex mu_;
  std::vector<std::string> warnings_;
};

inline void warn(Diagnostics* diag, std::string message) {
  if (diag != nullptr) diag->warn(std::move(message));
}

}  // namespace longsim
