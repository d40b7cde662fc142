#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <queue>
#include <set>
#include <span>
#include <vector>

#include "mmmf/cardinality.hpp"
#include "mmmf/error.hpp"
#include "mmmf/meanfield.hpp"
#include "mmmf/model.hpp"
#include "mmmf/rng.hpp"

namespace mmmf {

struct TemperatureSchedule {
  std::vector<double> temps;  // ascending, all > 1

  void validate() const {
    detail::require(!temps.empty(), "TemperatureSchedule: empty");
    for (std::size_t k = 0; k < temps.size(); ++k) {
      detail::require(std::isfinite(temps[k]) && temps[k] > 1.0, "TemperatureSchedule: temperatures must be > 1");
      detail::require(k == 0 || temps[k] > temps[k - 1], "TemperatureSchedule: temperatures must ascend strictly");
    }
  }

  // t_max^(k/steps) for k = 1..steps
  static TemperatureSchedule geometric(double t_max, int steps) {
    detail::require(t_max > 1.0 && steps >= 1, "TemperatureSchedule: need t_max > 1 and steps >= 1");
    TemperatureSchedule s;
    for (int k = 1; k <= steps; ++k) s.temps.push_back(std::pow(t_max, static_cast<double>(k) / steps));
    return s;
  }

  static TemperatureSchedule linear(double t_lo, double t_hi, int steps) {
    detail::require(t_lo > 1.0 && t_hi > t_lo && steps >= 2, "TemperatureSchedule: bad linear range");
    TemperatureSchedule s;
    for (int k = 0; k < steps; ++k) s.temps.push_back(t_lo + (t_hi - t_lo) * k / (steps - 1));
    return s;
  }
};

inline constexpr double kDefaultHLow = 0.3;
inline constexpr double kDefaultHHigh = 0.7;

/// 1 when the variable is uncertain at temperature T but confident at T = 1.
inline bool delta(std::span<const double> qT_row, std::span<const double> q1_row, double h_high = kDefaultHHigh,
                  double h_low = kDefaultHLow) {
  return entropy(qT_row) > h_high && entropy(q1_row) < h_low;
}

struct SweepEntry {
  double temperature = 1.0;
  MarginalField field;
  double free_energy = 0.0;
  bool feasible = true;
};

/// Constrained mean field at T = 1 followed by every scheduled temperature in
/// ascending order; with `warm` each solve starts from the previous solution,
/// otherwise every solve starts from `init`. If `base` is given it is used as
/// the T = 1 entry instead of solving for it.
inline std::vector<SweepEntry> sweep(const FactorGraph& g, const TemperatureSchedule& sched,
                                     const std::vector<CardinalityClause>& clauses, const MarginalField& init,
                                     const SolverConfig& cfg = {}, const DualConfig& dual = {}, bool warm = true,
                                     const MarginalField* base = nullptr) {
  sched.validate();
  std::vector<SweepEntry> out;
  out.reserve(sched.temps.size() + 1);
  if (base) {
    out.push_back({1.0, *base, free_energy(g, *base), true});
  } else {
    auto r = constrained_mf_solve(g, clauses, init, cfg, dual);
    out.push_back({1.0, std::move(r.field), r.free_energy, r.feasible});
  }
  for (double t : sched.temps) {
    const auto gt = temper(g, t);
    const MarginalField& start = warm ? out.back().field : init;
    auto r = constrained_mf_solve(gt, clauses, start, cfg, dual);
    out.push_back({t, std::move(r.field), r.free_energy, r.feasible});
  }
  return out;
}

struct ClampCandidate {
  int var = 0;
  int label = 0;
  double gap = 0.0;
  double temperature = 0.0;
};

enum class SeedPolicy {
  max_gap,  // seed at the largest entropy gap, group by graph distance
  maxw,     // the flagged variables with the largest MaxW scores
  random,   // flagged variables in random order
};

struct SelectionOptions {
  double h_high = kDefaultHHigh;
  double h_low = kDefaultHLow;
  int radius = -1;      // graph-distance restriction around the seed; < 0 means none
  int max_members = 0;  // cap on group size; 0 means no cap
  SeedPolicy seed_policy = SeedPolicy::max_gap;
  std::uint64_t seed = 0;          // for SeedPolicy::random
  std::vector<int> excluded;       // variables that may not be selected (already clamped)
};

struct ClampGroup {
  std::vector<ClauseMember> members;  // empty when nothing was flagged
  std::vector<ClampCandidate> flagged;
  double temperature = 0.0;
  bool empty() const { return members.empty(); }
};

/// Hop distance from `source` to every variable (-1 when unreachable).
inline std::vector<int> graph_distances(const FactorGraph& g, int source) {
  std::vector<int> dist(g.num_vars(), -1);
  std::queue<int> frontier;
  dist[source] = 0;
  frontier.push(source);
  while (!frontier.empty()) {
    const int v = frontier.front();
    frontier.pop();
    for (const auto& inc : g.neighbors(v)) {
      if (dist[inc.other] >= 0) continue;
      dist[inc.other] = dist[v] + 1;
      frontier.push(inc.other);
    }
  }
  return dist;
}

/// Sum of |w| over every incident pairwise table.
inline double maxw_score(const FactorGraph& g, int i) {
  double s = 0.0;
  for (const auto& inc : g.neighbors(i))
    for (double w : g.edges()[inc.edge].w) s += std::abs(w);
  return s;
}

inline int maxw_select(const FactorGraph& g, const std::set<int>& already_clamped) {
  int best = -1;
  double best_score = -1.0;
  for (int i = 0; i < g.num_vars(); ++i) {
    if (already_clamped.count(i)) continue;
    const double s = maxw_score(g, i);
    if (s > best_score) {
      best = i;
      best_score = s;
    }
  }
  detail::require(best >= 0, "maxw_select: every variable is already clamped");
  return best;
}

/// Scans the sweep upward from T = 1 and stops at the first temperature where
/// some variable is flagged by delta. The group's labels are the T = 1 argmax.
inline ClampGroup select_clamp_group(const FactorGraph& g, const std::vector<SweepEntry>& sweep_result,
                                     const SelectionOptions& opt = {}) {
  detail::require(!sweep_result.empty() && sweep_result.front().temperature == 1.0,
                  "select_clamp_group: sweep must start with the T = 1 entry");
  detail::require(opt.h_low > 0.0 && opt.h_low < opt.h_high && opt.h_high < 1.0,
                  "select_clamp_group: need 0 < h_low < h_high < 1");
  const auto& q1 = sweep_result.front().field;
  const std::set<int> excluded(opt.excluded.begin(), opt.excluded.end());
  const auto map1 = argmax_labels(q1);
  ClampGroup out;
  for (std::size_t t = 1; t < sweep_result.size(); ++t) {
    const auto& qt = sweep_result[t].field;
    for (int i = 0; i < g.num_vars(); ++i) {
      if (excluded.count(i)) continue;
      if (!delta(qt.row(i), q1.row(i), opt.h_high, opt.h_low)) continue;
      out.flagged.push_back({i, map1[i], entropy(qt.row(i)) - entropy(q1.row(i)), sweep_result[t].temperature});
    }
    if (!out.flagged.empty()) {
      out.temperature = sweep_result[t].temperature;
      break;
    }
  }
  if (out.flagged.empty()) return out;

  auto by_gap = out.flagged;
  std::stable_sort(by_gap.begin(), by_gap.end(), [](const auto& a, const auto& b) { return a.gap > b.gap; });
  std::vector<ClampCandidate> ordered;
  switch (opt.seed_policy) {
    case SeedPolicy::max_gap: {
      const auto dist = graph_distances(g, by_gap.front().var);
      for (const auto& c : by_gap) {
        if (dist[c.var] < 0 && c.var != by_gap.front().var && opt.radius >= 0) continue;
        if (opt.radius >= 0 && dist[c.var] > opt.radius) continue;
        ordered.push_back(c);
      }
      // nearest first, larger gap first among equals
      auto hops = [&](int v) { return dist[v] < 0 ? std::numeric_limits<int>::max() : dist[v]; };
      std::stable_sort(ordered.begin(), ordered.end(),
                       [&](const auto& a, const auto& b) { return hops(a.var) < hops(b.var); });
      break;
    }
    case SeedPolicy::maxw: {
      ordered = out.flagged;
      std::stable_sort(ordered.begin(), ordered.end(),
                       [&](const auto& a, const auto& b) { return maxw_score(g, a.var) > maxw_score(g, b.var); });
      break;
    }
    case SeedPolicy::random: {
      ordered = out.flagged;
      auto rng = Rng::stream(opt.seed, "select/v1");
      for (std::size_t k = ordered.size(); k > 1; --k) std::swap(ordered[k - 1], ordered[rng.index(k)]);
      break;
    }
  }
  if (opt.max_members > 0 && static_cast<int>(ordered.size()) > opt.max_members) ordered.resize(opt.max_members);
  for (const auto& c : ordered) out.members.push_back({c.var, c.label});
  return out;
}

/// Critical temperature of the uniform binary dense Gaussian model at U = 0.
/// For U != 0 the same value bounds the transition from above.
inline double critical_temperature(const DenseGaussianSpec& s) {
  s.validate();
  return s.gamma * s.theta_rgb / 2.0;
}

/// Stable solutions in [-1/2, 1/2] of q = tanh((q * gamma_eff - U) / T) / 2.
inline std::vector<double> tanh_fixed_points(double gamma_eff, double unary, double temperature) {
  detail::require(temperature > 0.0, "tanh_fixed_points: temperature must be > 0");
  auto f = [&](double q) { return 0.5 * std::tanh((q * gamma_eff - unary) / temperature); };
  auto slope = [&](double q) {
    const double t = std::tanh((q * gamma_eff - unary) / temperature);
    return 0.5 * (1.0 - t * t) * gamma_eff / temperature;
  };
  std::vector<double> found;
  constexpr int kStarts = 41;
  for (int s = 0; s < kStarts; ++s) {
    double q = -0.5 + static_cast<double>(s) / (kStarts - 1);
    for (int it = 0; it < 100000; ++it) {
      const double next = 0.5 * q + 0.5 * f(q);
      if (std::abs(next - q) < 1e-15) {
        q = next;
        break;
      }
      q = next;
    }
    for (int it = 0; it < 50; ++it) {
      const double d = slope(q) - 1.0;
      if (d == 0.0) break;
      const double step = (f(q) - q) / d;
      q -= step;
      if (std::abs(step) < 1e-16) break;
    }
    if (std::abs(f(q) - q) > 1e-9 || slope(q) >= 1.0) continue;
    if (std::none_of(found.begin(), found.end(), [&](double r) { return std::abs(r - q) < 1e-6; })) found.push_back(q);
  }
  std::sort(found.begin(), found.end());
  return found;
}

struct TcRow {
  double temperature;
  double mean, min, max, p90;
  double mean_max_prob;
};

inline TcRow entropy_stats(double t, const MarginalField& q) {
  std::vector<double> h(q.num_vars());
  double mp = 0.0;
  for (int i = 0; i < q.num_vars(); ++i) {
    h[i] = entropy(q.row(i));
    const auto r = q.row(i);
    mp += *std::max_element(r.begin(), r.end());
  }
  std::sort(h.begin(), h.end());
  double mean = 0.0;
  for (double v : h) mean += v;
  mean /= h.size();
  // nearest-rank 90th percentile
  const auto rank = static_cast<std::size_t>(std::ceil(0.9 * h.size()));
  return {t, mean, h.front(), h.back(), h[std::max<std::size_t>(rank, 1) - 1], mp / q.num_vars()};
}

/// Unconstrained warm-started sweep over `temps` in the given order, with
/// entropy statistics per temperature.
inline std::vector<TcRow> tc_scan(const FactorGraph& g, const std::vector<double>& temps, const MarginalField& init,
                                  const SolverConfig& cfg) {
  std::vector<TcRow> rows;
  MarginalField q = init;
  for (double t : temps) {
    auto r = mf_solve(temper(g, t), q, cfg);
    q = std::move(r.field);
    rows.push_back(entropy_stats(t, q));
  }
  return rows;
}

// First temperature whose mean max-label probability falls below `level`.
inline std::optional<double> transition_temperature(const std::vector<TcRow>& rows, double level = 0.6) {
  for (const auto& r : rows)
    if (r.mean_max_prob < level) return r.temperature;
  return std::nullopt;
}

inline MarginalField polarized_field(int n, int nl, double p0) {
  std::vector<double> q(static_cast<std::size_t>(n) * nl, (1.0 - p0) / (nl - 1));
  for (int i = 0; i < n; ++i) q[static_cast<std::size_t>(i) * nl] = p0;
  return MarginalField(n, nl, std::move(q));
}

}  // namespace mmmf
