#pragma once

#include <stdexcept>
#include <string>

namespace enfed {

struct EnfedError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad experiment configuration (schema violation, unknown key, bad range).
struct ConfigError : EnfedError {
    using EnfedError::EnfedError;
};

// CSV / dataset ingestion problems, reported with row context.
struct DataError : EnfedError {
    using EnfedError::EnfedError;
};

// Training produced a non-finite loss; the run is aborted rather than
// returning NaN weights.
struct DivergenceError : EnfedError {
    using EnfedError::EnfedError;
};

}  // namespace enfed
