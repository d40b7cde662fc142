#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "mmmf/error.hpp"
#include "mmmf/mixture.hpp"

namespace mmmf {

/// One mode list per time step, and a K_t x K_{t+1} row-major transition
/// cost table between every pair of consecutive steps.
struct ModeSequenceProblem {
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> transitions;

  int steps() const { return static_cast<int>(weights.size()); }

  void validate() const {
    detail::require(!weights.empty(), "ModeSequenceProblem: no steps");
    detail::require(transitions.size() + 1 == weights.size(),
                    "ModeSequenceProblem: need one transition table per consecutive pair of steps");
    for (const auto& w : weights) {
      detail::require(!w.empty(), "ModeSequenceProblem: a step has no modes");
      double s = 0.0;
      for (double m : w) {
        detail::require(std::isfinite(m) && m >= 0.0 && m <= 1.0, "ModeSequenceProblem: weight outside [0,1]");
        s += m;
      }
      detail::require(std::abs(s - 1.0) <= 1e-6, "ModeSequenceProblem: step weights must sum to 1");
    }
    for (std::size_t t = 0; t < transitions.size(); ++t) {
      detail::require(transitions[t].size() == weights[t].size() * weights[t + 1].size(),
                      "ModeSequenceProblem: transition table has the wrong size");
      for (double c : transitions[t])
        detail::require(std::isfinite(c) && c >= 0.0, "ModeSequenceProblem: transition costs must be finite and >= 0");
    }
  }
};

inline constexpr double kModeWeightClamp = 1e-12;

/// log((1 - m) / m), with m first clamped into [1e-12, 1 - 1e-12].
inline double mode_cost(double m, bool* clamped = nullptr) {
  const double c = std::clamp(m, kModeWeightClamp, 1.0 - kModeWeightClamp);
  if (clamped) *clamped = c != m;
  return std::log((1.0 - c) / c);
}

struct ModeSequence {
  std::vector<int> modes;
  double cost = 0.0;
  int clamped_weights = 0;
};

/// Minimum-cost choice of one mode per step. Among equal costs the sequence
/// chosen takes the lowest index at the last step, then at the step before,
/// and so on back to the first.
inline ModeSequence best_mode_sequence(const ModeSequenceProblem& p) {
  p.validate();
  const int steps = p.steps();
  ModeSequence out;
  std::vector<std::vector<double>> node(steps);
  for (int t = 0; t < steps; ++t)
    for (double m : p.weights[t]) {
      bool c = false;
      node[t].push_back(mode_cost(m, &c));
      out.clamped_weights += c ? 1 : 0;
    }
  std::vector<std::vector<double>> best(steps);
  std::vector<std::vector<int>> from(steps);
  best[0] = node[0];
  from[0].assign(node[0].size(), -1);
  for (int t = 1; t < steps; ++t) {
    const auto kp = p.weights[t - 1].size(), kn = p.weights[t].size();
    best[t].assign(kn, std::numeric_limits<double>::infinity());
    from[t].assign(kn, -1);
    for (std::size_t j = 0; j < kn; ++j) {
      for (std::size_t k = 0; k < kp; ++k) {
        const double v = best[t - 1][k] + p.transitions[t - 1][k * kn + j];
        if (v < best[t][j]) {
          best[t][j] = v;
          from[t][j] = static_cast<int>(k);
        }
      }
      best[t][j] += node[t][j];
    }
  }
  const auto& last = best[steps - 1];
  int k = static_cast<int>(std::min_element(last.begin(), last.end()) - last.begin());
  out.cost = last[k];
  out.modes.assign(steps, 0);
  for (int t = steps - 1; t >= 0; --t) {
    out.modes[t] = k;
    k = from[t][k];
  }
  return out;
}

/// Stand-in transition costs: weight times the fraction of variables whose
/// MAP label differs between the two modes.
inline std::vector<std::vector<double>> map_disagreement_transitions(const std::vector<Mixture>& seq, double weight) {
  detail::require(weight >= 0.0, "map_disagreement_transitions: weight must be >= 0");
  std::vector<std::vector<double>> out;
  for (std::size_t t = 0; t + 1 < seq.size(); ++t) {
    const auto& a = seq[t];
    const auto& b = seq[t + 1];
    std::vector<double> table;
    for (int k = 0; k < a.size(); ++k) {
      const auto xa = mode_map(a, k);
      for (int j = 0; j < b.size(); ++j) {
        const auto xb = mode_map(b, j);
        detail::require(xa.size() == xb.size(), "map_disagreement_transitions: mixtures over different graphs");
        int diff = 0;
        for (std::size_t i = 0; i < xa.size(); ++i) diff += xa[i] != xb[i] ? 1 : 0;
        table.push_back(weight * diff / static_cast<double>(xa.size()));
      }
    }
    out.push_back(std::move(table));
  }
  return out;
}

}  // namespace mmmf
