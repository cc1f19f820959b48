#pragma once

#include <stdexcept>
#include <string>

namespace pspin {

/// Invalid or inconsistent run configuration (unknown key, missing key,
/// out-of-range value). Maps to CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// A requested computation exceeds a configured cap (tensor entries,
/// enumeration size, tuple budget). Maps to CLI exit code 3.
class BudgetError : public std::runtime_error {
 public:
  explicit BudgetError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace pspin
