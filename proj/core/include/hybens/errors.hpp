#pragma once

#include <stdexcept>
#include <string>

namespace hybens {

// Error taxonomy. The command line tool maps these to distinct exit codes
// (see tools/): configuration 2, numerical blow-up 3, I/O 4, domain escape 5.

// A caller broke an API precondition (bad axis index, mismatched grids, ...).
struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A scenario or object description is internally inconsistent or does not
// fit the grid it is applied to.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A required state invariant does not hold (e.g. non-positive total mass).
struct InvalidStateError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Conditioning on a classical configuration with no probability mass.
struct UndefinedConditionalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// An O(N^2) diagnostic was asked to run on a grid too large for it.
struct RefusalError : UsageError {
  using UsageError::UsageError;
};

// Data would leave the configured domain (e.g. measurement image escapes).
struct DomainEscapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite values appeared during time integration.
class BlowUpError : public std::runtime_error {
 public:
  BlowUpError(std::string field, long step, double time)
      : std::runtime_error("numerical blow-up in field '" + field +
                           "' at step " + std::to_string(step) + ", t=" +
                           std::to_string(time)),
        field_(std::move(field)),
        step_(step),
        time_(time) {}

  const std::string& field() const { return field_; }
  long step() const { return step_; }
  double time() const { return time_; }

 private:
  std::string field_;
  long step_;
  double time_;
};

}  // namespace hybens
