#pragma once

#include <stdexcept>
#include <string>

namespace sdd {

// Process exit codes used by the CLI. Library code throws the typed errors
// below; the CLI maps them to these codes.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitMissingFile = 2,
  kExitSchemaViolation = 3,
  kExitNumericAbort = 4,
};

struct MissingFileError : std::runtime_error {
  explicit MissingFileError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed or out-of-contract input: bad JSON, missing fields, wrong
// version tags, values outside their documented domain.
struct SchemaError : std::runtime_error {
  explicit SchemaError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values detected in a loss or gradient during optimization.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace sdd
