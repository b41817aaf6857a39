#pragma once

#include <stdexcept>
#include <string>

namespace intermit {

/// Argument outside the mathematical domain of an operation (e.g. x outside [0,1]).
class DomainError : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

/// Value outside the admissible range (branch image, truncation index, ...).
class RangeError : public std::out_of_range {
public:
  using std::out_of_range::out_of_range;
};

/// Iterative method failed to converge, or a solve hit a singular system.
class NumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class UnsupportedError : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

/// Parameters do not describe an admissible object (map family, induced system).
class ConstructionError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Caller violated a documented precondition (e.g. observable support).
class ContractError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

class InsufficientDataError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Probe radius or window finer than the grid can resolve.
class ResolutionError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace intermit
