#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mmmf/error.hpp"

namespace mmmf {

/// Fully factorized distribution: one categorical row per variable.
class MarginalField {
 public:
  MarginalField() = default;

  MarginalField(int num_vars, int num_labels, std::vector<double> q)
      : num_vars_(num_vars), num_labels_(num_labels), q_(std::move(q)) {
    detail::require(num_vars >= 1 && num_labels >= 2, "MarginalField: bad dimensions");
    detail::require(q_.size() == static_cast<std::size_t>(num_vars) * num_labels,
                    "MarginalField: table must be num_vars x num_labels");
  }

  static MarginalField uniform(int num_vars, int num_labels) {
    return MarginalField(num_vars, num_labels,
                         std::vector<double>(static_cast<std::size_t>(num_vars) * num_labels, 1.0 / num_labels));
  }

  int num_vars() const { return num_vars_; }
  int num_labels() const { return num_labels_; }

  std::span<const double> row(int i) const {
    return std::span<const double>(q_).subspan(static_cast<std::size_t>(i) * num_labels_, num_labels_);
  }
  std::span<double> row(int i) {
    return std::span<double>(q_).subspan(static_cast<std::size_t>(i) * num_labels_, num_labels_);
  }
  double operator()(int i, int l) const { return q_[static_cast<std::size_t>(i) * num_labels_ + l]; }

  const std::vector<double>& table() const { return q_; }

  // Throws InvalidInput unless every row is a distribution (sum within tol of 1).
  void validate(double tol = 1e-9) const {
    for (int i = 0; i < num_vars_; ++i) {
      double s = 0.0;
      for (double p : row(i)) {
        detail::require(std::isfinite(p) && p >= 0.0 && p <= 1.0 + tol,
                        "MarginalField: entry outside [0,1] in row " + std::to_string(i));
        s += p;
      }
      detail::require(std::abs(s - 1.0) <= tol, "MarginalField: row " + std::to_string(i) + " does not sum to 1");
    }
  }

  bool operator==(const MarginalField&) const = default;

 private:
  int num_vars_ = 0;
  int num_labels_ = 2;
  std::vector<double> q_;
};

}  // namespace mmmf
