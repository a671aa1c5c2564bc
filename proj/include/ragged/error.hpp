#pragma once

#include <stdexcept>
#include <string>

namespace ragged {

/// Bad input: malformed files, violated invariants, inconsistent configuration.
/// The CLI maps it to exit code 1.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A reader or scorer backend failed after retries. The CLI maps it to exit code 2.
class BackendError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// top_gold was requested for a query whose top-k holds no gold passage.
class ConditionUnsatisfied : public ValidationError {
public:
    using ValidationError::ValidationError;
};

}  // namespace ragged
