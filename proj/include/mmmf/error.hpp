#pragma once

#include <stdexcept>
#include <string>

namespace mmmf {

// Malformed arguments: dimension mismatches, out-of-range labels, bad parameters.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// An exact oracle was asked to enumerate more states than its cap allows.
class EnumerationRefused : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A set of cardinality clauses admits no labeling.
class Infeasible : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void require(bool cond, const std::string& what) {
  if (!cond) throw InvalidInput(what);
}

}  // namespace detail
}  // namespace mmmf
