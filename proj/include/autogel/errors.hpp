#pragma once

#include <iostream>
#include <stdexcept>
#include <string>

namespace autogel {

/// Shapes of the operands do not satisfy the operation's shape rule.
struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Non-finite value produced, or a log/division on an invalid argument.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A precondition of the caller was violated.
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IngestionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SplitError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SamplingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Search or training produced a NaN loss.
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace logging {

inline bool& quiet() {
  static bool q = false;
  return q;
}

inline void warn(const std::string& msg) {
  if (!quiet()) std::cerr << "warning: " << msg << '\n';
}

inline void info(const std::string& msg) {
  if (!quiet()) std::cerr << msg << '\n';
}

}  // namespace logging
}  // namespace autogel
