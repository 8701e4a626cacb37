#pragma once

#include <stdexcept>
#include <string>

namespace swarmsync {

// Error taxonomy. The CLI maps these onto process exit codes:
// ConfigError/FormatError -> 2, NumericError/ShapeError/ContractError -> 3,
// TransportError -> 4.

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor or parameter layout mismatch.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite value where a finite one is required.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed byte-level input (IDX files, wire messages).
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Collective communication failure: timeout, round mismatch, aborted run.
struct TransportError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Caller violated an operation precondition.
struct ContractError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace swarmsync
