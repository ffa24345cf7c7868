#pragma once

#include <stdexcept>
#include <string>

namespace cwcl {

/// Invalid configuration or spec input; the CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace cwcl
