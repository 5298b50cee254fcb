#pragma once

#include <stdexcept>

namespace monojoin {

// Error taxonomy. The cli maps these onto exit codes:
// PreconditionError -> 2, DegenerateConstruction -> 3,
// SearchExhausted (and BudgetExceeded) -> 4, VerificationFailure -> 5.

struct PreconditionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DegenerateConstruction : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SearchExhausted : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// a size/support limit was hit before the computation could finish
struct BudgetExceeded : SearchExhausted {
  using SearchExhausted::SearchExhausted;
};

struct VerificationFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace monojoin
