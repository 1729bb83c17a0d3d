#ifndef AUTOCOST_ERRORS_HPP_
#define AUTOCOST_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace autocost {

// Caller broke a documented precondition (shape mismatch, stepping a
// finished episode, wrong network architecture).
class ContractError : public std::logic_error {
 public:
  explicit ContractError(const std::string& what) : std::logic_error(what) {}
};

// Rejection sampling could not place every entity with clearance.
class InfeasibleLayoutError : public std::runtime_error {
 public:
  explicit InfeasibleLayoutError(const std::string& what)
      : std::runtime_error(what) {}
};

// Invalid experiment / training / evolution configuration.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed input file (CSV schema, JSON layout, checkpoint).
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

// A learner produced a non-finite loss or parameters.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what)
      : std::runtime_error(what) {}
};

}  // namespace autocost

#endif  // AUTOCOST_ERRORS_HPP_
