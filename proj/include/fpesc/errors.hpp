#pragma once

#include <stdexcept>
#include <string>

namespace fpesc {

// Operation requires the other boundary kind (torus vs free space).
struct ModeMismatchError : std::logic_error {
  using std::logic_error::logic_error;
};

// Requested derivative order exceeds the truncation degree.
struct OrderError : std::logic_error {
  using std::logic_error::logic_error;
};

// Singular matrix / zero constant term / ill-conditioned path.
struct SingularityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidFieldError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Query time does not land on an integration/path grid node.
struct OffGridError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Non-finite state during integration; carries the time of blow-up and,
// when raised inside a Monte Carlo sweep, the offending sample index.
struct DivergenceError : std::runtime_error {
  double time;
  long sample;
  explicit DivergenceError(double t, long sample_index = -1)
      : std::runtime_error("non-finite state at t=" + std::to_string(t) +
                           (sample_index >= 0
                                ? " (sample " + std::to_string(sample_index) + ")"
                                : std::string{})),
        time(t),
        sample(sample_index) {}
};

}  // namespace fpesc
