#pragma once

#include <stdexcept>
#include <string>

namespace pnpood {

/// Raised for malformed inputs, bad configuration, or violated
/// preconditions. The CLI maps these to exit code 2; everything else
/// (std::runtime_error and friends) maps to exit code 1.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace pnpood
