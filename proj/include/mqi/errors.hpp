#pragma once

#include <stdexcept>
#include <string>

namespace mqi {

// Precondition violated on a physical quantity (negative probability,
// non-Hermitian matrix, out-of-range channel index, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// An estimator could not produce a value (zero denominator, missing setting).
class EstimationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ReconstructionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid or inconsistent configuration / input file.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mqi
