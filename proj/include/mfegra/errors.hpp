#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace mfegra {

/// Invalid user-supplied configuration (bad distribution parameters, empty
/// candidate sets, malformed study specs). CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Kernel matrix factorization failed even after escalating the diagonal
/// jitter through the whole ladder. Carries the jitter values attempted.
/// CLI maps this to exit code 3.
class ConditioningError : public std::runtime_error {
 public:
  ConditioningError(const std::string& what, std::vector<double> jitter_ladder)
      : std::runtime_error(what), jitter_ladder_(std::move(jitter_ladder)) {}

  const std::vector<double>& jitter_ladder() const { return jitter_ladder_; }

 private:
  std::vector<double> jitter_ladder_;
};

}  // namespace mfegra
