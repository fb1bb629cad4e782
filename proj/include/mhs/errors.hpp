#pragma once

#include <stdexcept>
#include <string>

namespace mhs {

// Bad user input: malformed documents, schema violations, invalid values.
// The CLI maps this family to exit code 2.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Structurally valid document that violates a model invariant
// (e.g. unreachable storage point, duplicated segment id).
struct SchemaError : ConfigError {
  explicit SchemaError(const std::string& msg) : ConfigError(msg) {}
};

// Contract violations and failures while running: bad actions, missing
// actions, checkpoint mismatches, I/O failures. CLI exit code 3.
struct RuntimeFailure : std::runtime_error {
  explicit RuntimeFailure(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace mhs
