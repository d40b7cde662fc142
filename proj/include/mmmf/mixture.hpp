#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mmmf/cardinality.hpp"
#include "mmmf/error.hpp"
#include "mmmf/meanfield.hpp"
#include "mmmf/model.hpp"
#include "mmmf/rng.hpp"
#include "mmmf/selection.hpp"

namespace mmmf {

inline double log_z_tilde(const std::vector<double>& a) {
  detail::require(!a.empty(), "log_z_tilde: no modes");
  LogSumExp acc;
  for (double v : a) {
    detail::require(std::isfinite(v), "log_z_tilde: non-finite free energy");
    acc.add(v);
  }
  return acc.value();
}

/// softmax of the mode free energies
inline std::vector<double> mixture_weights(const std::vector<double>& a) {
  const double lz = log_z_tilde(a);
  std::vector<double> m(a.size());
  for (std::size_t k = 0; k < a.size(); ++k) m[k] = std::exp(a[k] - lz);
  return m;
}

struct Mode {
  MarginalField field;
  double weight = 1.0;
  double free_energy = 0.0;
  bool feasible = true;
};

struct Mixture {
  std::vector<Mode> modes;
  double log_z_tilde = 0.0;

  int size() const { return static_cast<int>(modes.size()); }

  static Mixture from_modes(std::vector<MarginalField> fields, const std::vector<double>& a,
                            const std::vector<bool>& feasible) {
    detail::require(fields.size() == a.size() && a.size() == feasible.size(), "Mixture: length mismatch");
    Mixture mix;
    mix.log_z_tilde = mmmf::log_z_tilde(a);
    const auto m = mixture_weights(a);
    for (std::size_t k = 0; k < a.size(); ++k) mix.modes.push_back({std::move(fields[k]), m[k], a[k], feasible[k]});
    return mix;
  }
};

inline Labeling mode_map(const Mixture& mix, int k) {
  detail::require(k >= 0 && k < mix.size(), "mode_map: mode index out of range");
  return argmax_labels(mix.modes[k].field);
}

/// KL(Q_MM || P) by full enumeration, Q_MM(x) = sum_k m_k prod_i q^k_i(x_i).
inline double mixture_kl_exact(const FactorGraph& g, const Mixture& mix, std::uint64_t cap = kDefaultEnumerationCap) {
  detail::require(mix.size() >= 1, "mixture_kl_exact: empty mixture");
  for (const auto& mode : mix.modes) check_field_matches(g, mode.field);
  const double log_z = exact_log_z(g, cap);
  const int n = g.num_vars(), nl = g.num_labels();
  // log tables; zero probabilities become -inf and drop out
  std::vector<std::vector<double>> logq;
  std::vector<double> logm;
  for (const auto& mode : mix.modes) {
    std::vector<double> t(mode.field.table().size());
    for (std::size_t e = 0; e < t.size(); ++e) t[e] = std::log(mode.field.table()[e]);
    logq.push_back(std::move(t));
    logm.push_back(std::log(mode.weight));
  }
  double kl = 0.0;
  for_each_labeling(g, cap, [&](const Labeling& x, double e) {
    LogSumExp acc;
    for (std::size_t k = 0; k < logq.size(); ++k) {
      double s = logm[k];
      for (int i = 0; i < n; ++i) s += logq[k][static_cast<std::size_t>(i) * nl + x[i]];
      acc.add(s);
    }
    const double lq = acc.value();
    if (lq == -std::numeric_limits<double>::infinity()) return;
    kl += std::exp(lq) * (lq + e + log_z);
  });
  return kl;
}

enum class ThresholdPolicy { all, one, half };

inline int threshold_for(ThresholdPolicy p, int group_size) {
  switch (p) {
    case ThresholdPolicy::all: return group_size;
    case ThresholdPolicy::one: return 1;
    case ThresholdPolicy::half: return (group_size + 1) / 2;
  }
  return group_size;
}

enum class SplitRule {
  group,           // temperature sweep + entropy-gap group
  single_maxw,     // one variable by MaxW
  single_entropy,  // one variable by largest entropy gap
};

struct BuildConfig {
  SolverConfig solver;
  DualConfig dual;
  TemperatureSchedule schedule = TemperatureSchedule::geometric(8.0, 8);
  SelectionOptions selection;
  ThresholdPolicy threshold = ThresholdPolicy::all;
  SplitRule rule = SplitRule::group;
  double epsilon = 1e-4;
  std::uint64_t seed = 0;
};

struct ModeNode {
  int parent = -1;
  int left = -1;
  int right = -1;
  std::optional<CardinalityClause> clause;  // on internal nodes; the left child takes it, the right its complement
  MarginalField field;
  double free_energy = 0.0;
  bool feasible = true;
  std::vector<DualState> duals;
  bool terminal = false;  // no further split possible

  bool is_leaf() const { return left < 0; }
};

struct ModeTree {
  std::vector<ModeNode> nodes;  // breadth-first creation order; node 0 is the root

  std::vector<int> leaves() const {
    std::vector<int> out;
    for (int k = 0; k < static_cast<int>(nodes.size()); ++k)
      if (nodes[k].is_leaf()) out.push_back(k);
    return out;
  }

  int internal_count() const { return static_cast<int>(nodes.size() - leaves().size()); }

  // Constraints accumulated from the root down to `node`.
  std::vector<CardinalityClause> path_clauses(int node) const {
    std::vector<CardinalityClause> out;
    for (int child = node, p = nodes.at(node).parent; p >= 0; child = p, p = nodes[p].parent) {
      const auto& c = *nodes[p].clause;
      out.push_back(nodes[p].left == child ? c : clause_complement(c));
    }
    std::reverse(out.begin(), out.end());
    return out;
  }

  Mixture mixture() const {
    std::vector<MarginalField> fields;
    std::vector<double> a;
    std::vector<bool> ok;
    for (int k : leaves()) {
      fields.push_back(nodes[k].field);
      a.push_back(nodes[k].free_energy);
      ok.push_back(nodes[k].feasible);
    }
    return Mixture::from_modes(std::move(fields), a, ok);
  }
};

/// Grows a mode tree one breadth-first split at a time, so that the trees for
/// increasing K are nested.
class ModeTreeBuilder {
 public:
  ModeTreeBuilder(const FactorGraph& g, BuildConfig cfg) : g_(g), cfg_(std::move(cfg)) {
    detail::require(cfg_.epsilon > 0.0 && cfg_.epsilon < 0.5, "BuildConfig: epsilon must lie in (0, 0.5)");
    auto root = mf_solve(g_, noisy_uniform(g_.num_vars(), g_.num_labels(), cfg_.seed), cfg_.solver);
    ModeNode n;
    n.field = std::move(root.field);
    n.free_energy = root.free_energy;
    tree_.nodes.push_back(std::move(n));
    queue_.push_back(0);
  }

  /// Splits until there are K leaves or nothing can split; returns the leaf count.
  int grow_to(int k) {
    detail::require(k >= 1, "grow_to: K must be >= 1");
    while (leaf_count() < k && !queue_.empty()) {
      const int node = queue_.front();
      queue_.pop_front();
      if (!split(node)) tree_.nodes[node].terminal = true;
    }
    return leaf_count();
  }

  int leaf_count() const { return static_cast<int>(tree_.nodes.size() + 1) / 2; }
  bool exhausted() const { return queue_.empty(); }
  const ModeTree& tree() const { return tree_; }
  Mixture mixture() const { return tree_.mixture(); }

 private:
  std::vector<ClauseMember> choose_group(int node, const std::vector<CardinalityClause>& path) {
    std::set<int> clamped;
    for (const auto& c : path)
      for (const auto& m : c.members) clamped.insert(m.var);
    const auto& leaf = tree_.nodes[node];
    if (cfg_.rule == SplitRule::single_maxw) {
      if (static_cast<int>(clamped.size()) == g_.num_vars()) return {};
      const int v = maxw_select(g_, clamped);
      return {{v, argmax_labels(leaf.field)[v]}};
    }
    SelectionOptions opt = cfg_.selection;
    opt.excluded.insert(opt.excluded.end(), clamped.begin(), clamped.end());
    opt.seed = mix64(cfg_.seed ^ mix64(static_cast<std::uint64_t>(node) + 1));
    if (cfg_.rule == SplitRule::single_entropy) {
      opt.seed_policy = SeedPolicy::max_gap;
      opt.max_members = 1;
    }
    const auto sw = sweep(g_, cfg_.schedule, path, leaf.field, cfg_.solver, cfg_.dual, true, &leaf.field);
    return select_clamp_group(g_, sw, opt).members;
  }

  bool split(int node) {
    const auto path = tree_.path_clauses(node);
    auto members = choose_group(node, path);
    if (members.empty()) return false;
    CardinalityClause clause;
    clause.members = std::move(members);
    clause.threshold = threshold_for(cfg_.threshold, clause.size());
    clause.direction = Direction::at_least;
    clause.epsilon = cfg_.epsilon;

    ConstrainedResult sides[2];
    try {
      for (int s = 0; s < 2; ++s) {
        auto clauses = path;
        clauses.push_back(s == 0 ? clause : clause_complement(clause));
        sides[s] = constrained_mf_solve(g_, clauses, tree_.nodes[node].field, cfg_.solver, cfg_.dual);
      }
    } catch (const Infeasible&) {
      return false;
    }
    tree_.nodes[node].clause = clause;
    for (int s = 0; s < 2; ++s) {
      ModeNode child;
      child.parent = node;
      child.field = std::move(sides[s].field);
      child.free_energy = sides[s].free_energy;
      child.feasible = sides[s].feasible;
      child.duals = std::move(sides[s].duals);
      const int id = static_cast<int>(tree_.nodes.size());
      (s == 0 ? tree_.nodes[node].left : tree_.nodes[node].right) = id;
      tree_.nodes.push_back(std::move(child));
      queue_.push_back(id);
    }
    return true;
  }

  const FactorGraph& g_;
  BuildConfig cfg_;
  ModeTree tree_;
  std::deque<int> queue_;
};

struct MmmfResult {
  ModeTree tree;
  Mixture mixture;
};

inline MmmfResult build_mmmf(const FactorGraph& g, int target_modes, const BuildConfig& cfg = {}) {
  ModeTreeBuilder b(g, cfg);
  b.grow_to(target_modes);
  return {b.tree(), b.mixture()};
}

enum class SingleVarRule { maxw, entropy_gap };

inline MmmfResult single_var_clamp_tree(const FactorGraph& g, int target_modes, BuildConfig cfg = {},
                                        SingleVarRule rule = SingleVarRule::maxw) {
  detail::require(g.num_labels() == 2, "single_var_clamp_tree: binary labels required");
  cfg.rule = rule == SingleVarRule::maxw ? SplitRule::single_maxw : SplitRule::single_entropy;
  return build_mmmf(g, target_modes, cfg);
}

}  // namespace mmmf
