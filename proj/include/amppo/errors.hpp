#pragma once

#include <stdexcept>
#include <string>

namespace amppo {

/// Invalid configuration or mismatched dimensions.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite value encountered during training or evaluation.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace amppo
