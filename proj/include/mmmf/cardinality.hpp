#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "mmmf/error.hpp"
#include "mmmf/marginal_field.hpp"
#include "mmmf/meanfield.hpp"
#include "mmmf/model.hpp"

namespace mmmf {

enum class Direction { at_least, less_than };

inline const char* to_string(Direction d) { return d == Direction::at_least ? "at_least" : "less_than"; }

struct ClauseMember {
  int var = 0;
  int label = 0;
  bool operator==(const ClauseMember&) const = default;
};

/// "At least / fewer than `threshold` of the members take their listed label",
/// enforced on a mode up to violation probability `epsilon`.
struct CardinalityClause {
  std::vector<ClauseMember> members;
  int threshold = 0;
  Direction direction = Direction::at_least;
  double epsilon = 1e-4;

  int size() const { return static_cast<int>(members.size()); }

  void validate() const {
    std::set<int> vars;
    for (const auto& m : members) {
      detail::require(m.var >= 0 && m.label >= 0, "CardinalityClause: negative member index");
      detail::require(vars.insert(m.var).second, "CardinalityClause: member variables must be distinct");
    }
    detail::require(threshold >= 0 && threshold <= size(), "CardinalityClause: threshold must lie in [0, L]");
    detail::require(epsilon > 0.0 && epsilon < 0.5, "CardinalityClause: epsilon must lie in (0, 0.5)");
  }

  void validate(const FactorGraph& g) const {
    validate();
    for (const auto& m : members)
      detail::require(m.var < g.num_vars() && m.label < g.num_labels(), "CardinalityClause: member out of range");
  }

  bool operator==(const CardinalityClause&) const = default;
};

inline CardinalityClause clause_complement(const CardinalityClause& c) {
  CardinalityClause out = c;
  out.direction = c.direction == Direction::at_least ? Direction::less_than : Direction::at_least;
  return out;
}

inline int matching_count(const Labeling& x, const CardinalityClause& c) {
  int s = 0;
  for (const auto& m : c.members) s += x.at(m.var) == m.label ? 1 : 0;
  return s;
}

inline bool satisfies(const Labeling& x, const CardinalityClause& c) {
  const int s = matching_count(x, c);
  return c.direction == Direction::at_least ? s >= c.threshold : s < c.threshold;
}

namespace detail {

// Distribution of a sum of independent Bernoulli(p_k) variables, truncated at
// `cap`: out[k] = P(count = k) for k < cap and out[cap] = P(count >= cap).
// The optional `skip` index is left out of the sum.
inline void poisson_binomial_truncated(std::span<const double> p, int cap, std::vector<double>& out, int skip = -1) {
  out.assign(static_cast<std::size_t>(cap) + 1, 0.0);
  out[0] = 1.0;
  int reach = 0;  // highest bucket with mass so far
  for (int k = 0; k < static_cast<int>(p.size()); ++k) {
    if (k == skip) continue;
    const double hit = p[k], miss = 1.0 - p[k];
    if (reach < cap) {
      out[reach + 1] = out[reach] * hit;
      for (int j = reach; j >= 1; --j) out[j] = out[j] * miss + out[j - 1] * hit;
      out[0] *= miss;
      ++reach;
    } else {
      out[cap] += out[cap - 1] * hit;
      for (int j = cap - 1; j >= 1; --j) out[j] = out[j] * miss + out[j - 1] * hit;
      out[0] *= miss;
    }
  }
}

inline double prob_at_least(const std::vector<double>& dist, int k) {
  if (k <= 0) return 1.0;
  const int cap = static_cast<int>(dist.size()) - 1;
  if (k > cap) return 0.0;
  double s = 0.0;
  for (int j = k; j <= cap; ++j) s += dist[j];
  return s;
}

inline double prob_below(const std::vector<double>& dist, int k) {
  if (k <= 0) return 0.0;
  const int cap = static_cast<int>(dist.size()) - 1;
  if (k > cap) return 1.0;
  double s = 0.0;
  for (int j = 0; j < k; ++j) s += dist[j];
  return s;
}

// A clause fails exactly when `count` relates to `threshold` as stated, where
// count is either the number of matching members or the number of
// mismatching ones, whichever gives the smaller threshold (and so the cheaper
// truncated recursion).
struct FailureEvent {
  bool count_mismatches = false;
  bool at_or_above = false;  // fail <=> count >= threshold, else count < threshold
  int threshold = 0;
};

inline FailureEvent failure_event(const CardinalityClause& c) {
  const int n = c.size();
  const int via_mismatch = n - c.threshold + 1;
  const bool use_mismatch = via_mismatch < c.threshold;
  if (c.direction == Direction::at_least) {
    // S < C  <=>  M >= L - C + 1
    return use_mismatch ? FailureEvent{true, true, via_mismatch} : FailureEvent{false, false, c.threshold};
  }
  // S >= C  <=>  M < L - C + 1
  return use_mismatch ? FailureEvent{true, false, via_mismatch} : FailureEvent{false, true, c.threshold};
}

inline std::vector<double> hit_probabilities(const MarginalField& q, const CardinalityClause& c, bool mismatches) {
  std::vector<double> p(c.members.size());
  for (std::size_t u = 0; u < c.members.size(); ++u) {
    const double match = q(c.members[u].var, c.members[u].label);
    p[u] = mismatches ? 1.0 - match : match;
  }
  return p;
}

inline int dp_cap(const FailureEvent& ev, int n) { return std::clamp(ev.threshold, 1, std::max(n, 1)); }

inline double event_probability(const std::vector<double>& dist, bool at_or_above, int threshold) {
  return at_or_above ? prob_at_least(dist, threshold) : prob_below(dist, threshold);
}

inline double standard_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

}  // namespace detail

/// Probability under the product law Q that clause c fails, computed exactly
/// from the Poisson-binomial law of the matching count.
inline double violation_prob_exact(const MarginalField& q, const CardinalityClause& c) {
  const auto ev = detail::failure_event(c);
  const int n = c.size();
  if (ev.threshold <= 0) return ev.at_or_above ? 1.0 : 0.0;
  if (ev.threshold > n) return ev.at_or_above ? 0.0 : 1.0;
  const auto p = detail::hit_probabilities(q, c, ev.count_mismatches);
  std::vector<double> dist;
  detail::poisson_binomial_truncated(p, ev.threshold, dist);
  return detail::event_probability(dist, ev.at_or_above, ev.threshold);
}

enum class VarianceMode { estimate, upper_bound };

struct GaussianViolation {
  double probability = 0.0;
  // Slack of the linearized constraint on the expected matching count;
  // non-negative when the surrogate is satisfied.
  double margin = 0.0;
  double variance = 0.0;
  bool exact_fallback = false;
};

/// Normal approximation (with continuity correction) of the failure
/// probability, plus the linear surrogate
///   at_least:  sum q(v_u) >= C - 1/2 + sigma * z_{1-eps}
///   less_than: sum q(v_u) <= C - 1/2 - sigma * z_{1-eps}
inline GaussianViolation violation_prob_gaussian(const MarginalField& q, const CardinalityClause& c,
                                                 VarianceMode mode = VarianceMode::estimate) {
  detail::require(c.size() >= 2, "violation_prob_gaussian: needs at least two members");
  double mean = 0.0, var = 0.0;
  for (const auto& m : c.members) {
    const double p = q(m.var, m.label);
    mean += p;
    var += p * (1.0 - p);
  }
  if (mode == VarianceMode::upper_bound) var = c.size() / 4.0;
  GaussianViolation out;
  out.variance = var;
  const double centre = c.threshold - 0.5;
  const double z = boost::math::quantile(boost::math::normal_distribution<double>(), 1.0 - c.epsilon);
  if (var <= 0.0) {
    out.exact_fallback = true;
    out.probability = violation_prob_exact(q, c);
    out.margin = c.direction == Direction::at_least ? mean - centre : centre - mean;
    return out;
  }
  const double sigma = std::sqrt(var);
  if (c.direction == Direction::at_least) {
    out.probability = detail::standard_normal_cdf((centre - mean) / sigma);
    out.margin = mean - (centre + sigma * z);
  } else {
    out.probability = detail::standard_normal_cdf((mean - centre) / sigma);
    out.margin = (centre - sigma * z) - mean;
  }
  return out;
}

/// Exact check that some labeling satisfies every clause, by backtracking
/// over the member variables. Gives up (answering true) after `node_budget`
/// search nodes.
inline bool clauses_satisfiable(const std::vector<CardinalityClause>& clauses, int num_labels,
                                std::int64_t node_budget = 1'000'000) {
  std::map<int, std::vector<std::pair<int, int>>> touches;  // var -> (clause, member)
  for (int k = 0; k < static_cast<int>(clauses.size()); ++k)
    for (int u = 0; u < clauses[k].size(); ++u) touches[clauses[k].members[u].var].push_back({k, u});
  std::vector<int> vars;
  std::vector<std::vector<int>> options;
  for (const auto& [var, refs] : touches) {
    std::set<int> targets;
    for (auto [k, u] : refs) targets.insert(clauses[k].members[u].label);
    std::vector<int> opts(targets.begin(), targets.end());
    for (int l = 0; l < num_labels; ++l)
      if (!targets.count(l)) {
        opts.push_back(l);  // one representative for "matches nothing"
        break;
      }
    vars.push_back(var);
    options.push_back(std::move(opts));
  }
  const int nc = static_cast<int>(clauses.size());
  std::vector<int> matched(nc, 0), remaining(nc);
  for (int k = 0; k < nc; ++k) remaining[k] = clauses[k].size();
  auto feasible_now = [&](int k) {
    const auto& c = clauses[k];
    if (c.direction == Direction::at_least) return matched[k] + remaining[k] >= c.threshold;
    return matched[k] < c.threshold;
  };
  for (int k = 0; k < nc; ++k)
    if (!feasible_now(k)) return false;
  std::int64_t nodes = 0;
  bool gave_up = false;
  auto search = [&](auto&& self, std::size_t depth) -> bool {
    if (depth == vars.size()) return true;
    if (++nodes > node_budget) {
      gave_up = true;
      return true;
    }
    const auto& refs = touches[vars[depth]];
    for (int label : options[depth]) {
      bool ok = true;
      for (auto [k, u] : refs) {
        --remaining[k];
        if (clauses[k].members[u].label == label) ++matched[k];
      }
      for (auto [k, u] : refs) ok = ok && feasible_now(k);
      if (ok && self(self, depth + 1)) return true;
      for (auto [k, u] : refs) {
        ++remaining[k];
        if (clauses[k].members[u].label == label) --matched[k];
      }
    }
    return false;
  };
  const bool found = search(search, 0);
  return found || gave_up;
}

/// Clauses with min(C, L - C) <= 1 are enforced through the exact expected
/// value of the clause indicator; the rest through the Gaussian surrogate.
inline bool uses_exact_potential(const CardinalityClause& c) {
  return std::min(c.threshold, c.size() - c.threshold) <= 1;
}

struct DualState {
  double lambda = 0.0;
  bool feasible = false;
  int iterations = 0;
  double violation = 1.0;  // exact violation probability at exit
  bool exact_potential = true;
};

struct DualConfig {
  int max_outer = 50;
  double step = 0.5;             // eta in lambda <- lambda * exp(eta * log(violation / target))
  double target_fraction = 0.5;  // aim the violation at this fraction of epsilon
  double slack_fraction = 0.1;   // below this fraction of epsilon a positive lambda is relaxed
  VarianceMode variance = VarianceMode::estimate;
};

struct ConstrainedResult {
  MarginalField field;
  double free_energy = 0.0;  // unpenalized
  std::vector<DualState> duals;
  bool feasible = true;
  int outer_iterations = 0;
};

namespace detail {

class ClausePotential {
 public:
  ClausePotential(const std::vector<CardinalityClause>& clauses, const std::vector<double>& lambda, int num_vars)
      : clauses_(clauses), lambda_(lambda), by_var_(num_vars) {
    for (int k = 0; k < static_cast<int>(clauses.size()); ++k)
      for (int u = 0; u < clauses[k].size(); ++u) by_var_[clauses[k].members[u].var].push_back({k, u});
    events_.reserve(clauses.size());
    for (const auto& c : clauses) events_.push_back(failure_event(c));
  }

  void operator()(int i, const MarginalField& q, std::span<double> energies) {
    for (auto [k, u] : by_var_[i]) {
      const double lam = lambda_[k];
      if (lam == 0.0) continue;
      const auto& c = clauses_[k];
      const int target = c.members[u].label;
      if (!uses_exact_potential(c)) {
        // linear surrogate: a reward (at_least) or cost (less_than) on the listed label
        energies[target] += c.direction == Direction::at_least ? -lam : lam;
        continue;
      }
      // E_{Q without i}[lambda * 1(clause fails) | x_i = l]
      const auto& ev = events_[k];
      const int n = c.size();
      const auto p = hit_probabilities(q, c, ev.count_mismatches);
      poisson_binomial_truncated(p, dp_cap(ev, n), dist_, u);
      const double fail_if_hit = event_probability(dist_, ev.at_or_above, ev.threshold - 1);
      const double fail_if_miss = event_probability(dist_, ev.at_or_above, ev.threshold);
      const double on_target = ev.count_mismatches ? fail_if_miss : fail_if_hit;
      const double elsewhere = ev.count_mismatches ? fail_if_hit : fail_if_miss;
      for (int l = 0; l < static_cast<int>(energies.size()); ++l) energies[l] += lam * (l == target ? on_target : elsewhere);
    }
  }

 private:
  const std::vector<CardinalityClause>& clauses_;
  const std::vector<double>& lambda_;
  std::vector<std::vector<std::pair<int, int>>> by_var_;
  std::vector<FailureEvent> events_;
  std::vector<double> dist_;
};

}  // namespace detail

/// Mean field restricted (up to epsilon) to the cells described by `clauses`:
/// maximizes the free energy subject to violation_prob_exact(Q, c) <= eps_c
/// for every clause, by dual ascent on one multiplier per clause. Each inner
/// step is an ordinary mean-field solve with clause-induced potentials,
/// warm-started from the previous iterate. Returns the best feasible iterate,
/// or the least-violating one with feasible = false when the budget runs out.
inline ConstrainedResult constrained_mf_solve(const FactorGraph& g, const std::vector<CardinalityClause>& clauses,
                                              const MarginalField& init, const SolverConfig& cfg = {},
                                              const DualConfig& dual = {}) {
  if (clauses.empty()) {
    auto r = mf_solve(g, init, cfg);
    return {std::move(r.field), r.free_energy, {}, true, 0};
  }
  for (const auto& c : clauses) c.validate(g);
  if (!clauses_satisfiable(clauses, g.num_labels()))
    throw Infeasible("constrained_mf_solve: no labeling satisfies every clause");

  const std::size_t nc = clauses.size();
  std::vector<double> lambda(nc, 0.0);
  std::vector<double> infeasible_at(nc, -1.0);                                   // largest lambda seen infeasible
  std::vector<double> feasible_at(nc, std::numeric_limits<double>::infinity());  // smallest lambda seen feasible

  MarginalField q = init;
  ConstrainedResult best, fallback;
  bool have_best = false, have_fallback = false;
  double fallback_excess = std::numeric_limits<double>::infinity();
  std::vector<double> exact(nc), signal(nc);

  auto snapshot = [&](double a, bool feasible, int iters) {
    ConstrainedResult r;
    r.field = q;
    r.free_energy = a;
    r.feasible = feasible;
    r.outer_iterations = iters;
    for (std::size_t k = 0; k < nc; ++k)
      r.duals.push_back({lambda[k], exact[k] <= clauses[k].epsilon, iters, exact[k], uses_exact_potential(clauses[k])});
    return r;
  };

  int iter = 0;
  for (iter = 1; iter <= dual.max_outer; ++iter) {
    detail::ClausePotential potential(clauses, lambda, g.num_vars());
    auto inner = detail::coordinate_ascent(g, q, cfg, potential);
    q = std::move(inner.field);
    const double a = inner.free_energy;

    bool all_feasible = true, settled = true;
    double excess = 0.0;
    for (std::size_t k = 0; k < nc; ++k) {
      const auto& c = clauses[k];
      exact[k] = violation_prob_exact(q, c);
      signal[k] = exact[k];
      if (!uses_exact_potential(c) && c.size() >= 2)
        signal[k] = std::max(signal[k], violation_prob_gaussian(q, c, dual.variance).probability);
      const bool ok = exact[k] <= c.epsilon;
      all_feasible = all_feasible && ok;
      excess = std::max(excess, exact[k] / c.epsilon);
      const bool tight = lambda[k] == 0.0 || signal[k] >= dual.slack_fraction * c.epsilon;
      settled = settled && signal[k] <= c.epsilon && tight;
    }
    if (all_feasible && (!have_best || a > best.free_energy)) {
      best = snapshot(a, true, iter);
      have_best = true;
    }
    if (!all_feasible && excess < fallback_excess) {
      fallback = snapshot(a, false, iter);
      fallback_excess = excess;
      have_fallback = true;
    }
    if (settled) break;

    for (std::size_t k = 0; k < nc; ++k) {
      const auto& c = clauses[k];
      const bool ok = signal[k] <= c.epsilon;
      const bool tight = lambda[k] == 0.0 || signal[k] >= dual.slack_fraction * c.epsilon;
      if (ok && tight) continue;
      if (ok)
        feasible_at[k] = std::min(feasible_at[k], lambda[k]);
      else
        infeasible_at[k] = std::max(infeasible_at[k], lambda[k]);
      const double s = std::log(std::max(signal[k], 1e-300)) - std::log(dual.target_fraction * c.epsilon);
      // multiplicative once positive, so that multipliers spanning orders of
      // magnitude are reached in a few steps; the first step is additive
      double next = lambda[k] > 0.0 ? lambda[k] * std::exp(dual.step * s) : std::max(0.0, dual.step * s);
      if (next < 1e-8) next = 0.0;
      const double lo = std::max(infeasible_at[k], 0.0);
      const double hi = feasible_at[k];
      if (!ok && next >= hi) next = 0.5 * (lo + hi);
      if (ok && infeasible_at[k] >= 0.0 && next <= infeasible_at[k]) next = 0.5 * (lo + hi);
      if (!ok && std::isfinite(hi) && hi - lo <= 1e-9 * (1.0 + hi)) {
        // the bracket went stale (other multipliers moved); reopen it
        feasible_at[k] = std::numeric_limits<double>::infinity();
        next = std::max(lambda[k], dual.step * s) * std::exp(dual.step * s);
      }
      lambda[k] = next;
    }
  }

  ConstrainedResult out = have_best ? std::move(best) : (have_fallback ? std::move(fallback) : snapshot(0.0, false, iter));
  for (auto& d : out.duals) d.iterations = std::min(iter, dual.max_outer);
  out.outer_iterations = std::min(iter, dual.max_outer);
  return out;
}

}  // namespace mmmf
