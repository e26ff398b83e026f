#pragma once

#include <stdexcept>
#include <string>

namespace causynth {

/// Input or precondition problem (bad file, bad option, violated invariant).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numerical routine failed to produce a usable answer.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace causynth
