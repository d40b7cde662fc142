#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "mmmf/error.hpp"
#include "mmmf/mixture.hpp"
#include "mmmf/model.hpp"
#include "mmmf/rng.hpp"

namespace mmmf {

enum class Topology { grid, random };
enum class Coupling { attractive, mixed };

inline const char* to_string(Topology t) { return t == Topology::grid ? "grid" : "random"; }
inline const char* to_string(Coupling c) { return c == Coupling::attractive ? "attractive" : "mixed"; }

struct GenSpec {
  Topology topology = Topology::grid;
  int side = 4;
  Coupling coupling = Coupling::mixed;
  double pairwise_hi = 6.0;
  double unary_hi = 2.0;
  std::uint64_t seed = 0;

  void validate() const {
    detail::require(side >= 2, "GenSpec: side must be >= 2");
    detail::require(pairwise_hi >= 0.0 && unary_hi >= 0.0, "GenSpec: ranges must be >= 0");
  }
};

inline int grid_edge_count(int side) { return 2 * side * (side - 1); }

/// Random binary CRF. Edge tables are w * 1[x_i != x_j] with w ~ U[0, hi]
/// (attractive) or U[-hi, hi] (mixed); unaries are (u, 0) with u ~ U[-2, 2].
inline FactorGraph gen_crf(const GenSpec& s) {
  s.validate();
  auto rng = Rng::stream(s.seed, "gen/v1");
  const int n = s.side * s.side;
  std::vector<std::pair<int, int>> pairs;
  if (s.topology == Topology::grid) {
    for (int r = 0; r < s.side; ++r)
      for (int c = 0; c < s.side; ++c) {
        const int p = r * s.side + c;
        if (c + 1 < s.side) pairs.push_back({p, p + 1});
        if (r + 1 < s.side) pairs.push_back({p, p + s.side});
      }
  } else {
    std::vector<std::pair<int, int>> all;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) all.push_back({i, j});
    // partial Fisher-Yates: the first m slots are a uniform sample without replacement
    const int m = grid_edge_count(s.side);
    for (int k = 0; k < m; ++k) std::swap(all[k], all[k + rng.index(all.size() - k)]);
    pairs.assign(all.begin(), all.begin() + m);
    std::sort(pairs.begin(), pairs.end());
  }
  std::vector<Edge> edges;
  edges.reserve(pairs.size());
  const double lo = s.coupling == Coupling::attractive ? 0.0 : -s.pairwise_hi;
  for (auto [i, j] : pairs) edges.push_back({i, j, potts_table(2, rng.uniform(lo, s.pairwise_hi))});
  std::vector<double> unaries(static_cast<std::size_t>(n) * 2, 0.0);
  for (int i = 0; i < n; ++i) unaries[static_cast<std::size_t>(i) * 2] = rng.uniform(-s.unary_hi, s.unary_hi);
  return FactorGraph(n, 2, std::move(unaries), std::move(edges));
}

struct ToyGridSpec {
  int side = 16;
  double strong_w = 4.0;
  double weak_w = 0.5;
  double bias = 2.0;
  std::uint64_t seed = 0;
};

inline bool in_right_half(int side, int c) { return c >= side / 2; }
inline bool in_bottom_half(int side, int r) { return r >= side / 2; }

/// Four-quadrant attractive grid. Couplings are strong between two right-half
/// pixels on the same side of the horizontal midline and weak elsewhere.
/// Top-half unaries favour label 1 by `bias`; bottom-half unaries are
/// (u, 0) with u ~ U[-bias, bias].
inline FactorGraph gen_toy_grid(const ToyGridSpec& s) {
  detail::require(s.side >= 2 && s.side % 2 == 0, "gen_toy_grid: side must be even and >= 2");
  detail::require(s.strong_w >= 0.0 && s.weak_w >= 0.0 && s.bias >= 0.0, "gen_toy_grid: parameters must be >= 0");
  auto rng = Rng::stream(s.seed, "toy/v1");
  const int side = s.side, n = side * side;
  std::vector<Edge> edges;
  auto weight = [&](int r1, int c1, int r2, int c2) {
    const bool right = in_right_half(side, c1) && in_right_half(side, c2);
    const bool same_band = in_bottom_half(side, r1) == in_bottom_half(side, r2);
    return right && same_band ? s.strong_w : s.weak_w;
  };
  for (int r = 0; r < side; ++r)
    for (int c = 0; c < side; ++c) {
      const int p = r * side + c;
      if (c + 1 < side) edges.push_back({p, p + 1, potts_table(2, weight(r, c, r, c + 1))});
      if (r + 1 < side) edges.push_back({p, p + side, potts_table(2, weight(r, c, r + 1, c))});
    }
  std::vector<double> unaries(static_cast<std::size_t>(n) * 2, 0.0);
  for (int r = 0; r < side; ++r)
    for (int c = 0; c < side; ++c)
      unaries[static_cast<std::size_t>(r * side + c) * 2] = in_bottom_half(side, r) ? rng.uniform(-s.bias, s.bias) : s.bias;
  return FactorGraph(n, 2, std::move(unaries), std::move(edges));
}

inline std::vector<int> toy_quadrant(int side) {
  std::vector<int> out;
  for (int r = side / 2; r < side; ++r)
    for (int c = side / 2; c < side; ++c) out.push_back(r * side + c);
  return out;
}

enum class Method { mmmf_ours_m, mmmf_ours_r, base_maxw, entropy_single };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::mmmf_ours_m: return "mmmf_ours_m";
    case Method::mmmf_ours_r: return "mmmf_ours_r";
    case Method::base_maxw: return "base_maxw";
    case Method::entropy_single: return "entropy_single";
  }
  return "?";
}

inline std::optional<Method> parse_method(const std::string& s) {
  for (auto m : {Method::mmmf_ours_m, Method::mmmf_ours_r, Method::base_maxw, Method::entropy_single})
    if (s == to_string(m)) return m;
  return std::nullopt;
}

inline BuildConfig config_for(Method m, BuildConfig cfg, int group_size) {
  switch (m) {
    case Method::mmmf_ours_m:
      cfg.rule = SplitRule::group;
      cfg.selection.seed_policy = SeedPolicy::maxw;
      cfg.selection.max_members = group_size;
      break;
    case Method::mmmf_ours_r:
      cfg.rule = SplitRule::group;
      cfg.selection.seed_policy = SeedPolicy::random;
      cfg.selection.max_members = group_size;
      break;
    case Method::base_maxw: cfg.rule = SplitRule::single_maxw; break;
    case Method::entropy_single: cfg.rule = SplitRule::single_entropy; break;
  }
  return cfg;
}

struct BenchOptions {
  std::vector<GenSpec> specs{GenSpec{}};
  int trials = 100;  // instances per spec
  std::vector<Method> methods{Method::mmmf_ours_m, Method::mmmf_ours_r, Method::base_maxw, Method::entropy_single};
  std::vector<int> k_list{1, 2, 3, 4};
  std::uint64_t seed = 0;
  int jobs = 1;
  int group_size = 3;
  BuildConfig build;
  bool timing = false;

  void validate() const {
    detail::require(!specs.empty(), "bench: no specs");
    detail::require(trials >= 1, "bench: trials must be >= 1");
    detail::require(!methods.empty(), "bench: methods must be non-empty");
    detail::require(!k_list.empty(), "bench: K list must be non-empty");
    for (int k : k_list) detail::require(k >= 1, "bench: every K must be >= 1");
    detail::require(jobs >= 1, "bench: jobs must be >= 1");
    detail::require(group_size >= 1, "bench: group size must be >= 1");
  }
};

struct BenchRow {
  int instance_id = 0;
  std::uint64_t seed = 0;
  GenSpec spec;
  Method method = Method::mmmf_ours_m;
  int k = 1;
  std::optional<double> log_z_tilde;
  std::optional<double> exact_log_z;
  std::optional<double> kl_gap;
  int feasible_leaves = 0;
  int leaves = 0;
  std::optional<double> wall_ms;
  std::string error;
};

struct ExperimentResult {
  std::vector<BenchRow> rows;
  std::vector<std::string> exceptions;  // non-monotone log Z~ along a nested tree
  std::vector<std::string> failures;
};

inline std::uint64_t instance_seed(std::uint64_t seed, int instance_id) {
  return mix64(seed ^ mix64(static_cast<std::uint64_t>(instance_id) + 0x5851f42d4c957f2dULL));
}

namespace detail {

struct InstanceOutcome {
  std::vector<BenchRow> rows;
  std::vector<std::string> exceptions;
  std::vector<std::string> failures;
};

inline InstanceOutcome run_instance(const BenchOptions& opt, int id) {
  InstanceOutcome out;
  const std::size_t spec_index = static_cast<std::size_t>(id / opt.trials);
  GenSpec spec = opt.specs[spec_index];
  spec.seed = instance_seed(opt.seed, id);
  auto ks = opt.k_list;
  std::vector<int> sorted = ks;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());

  std::optional<FactorGraph> g;
  std::optional<double> exact;
  std::string gen_error;
  try {
    g = gen_crf(spec);
    if (enumerable(*g)) exact = exact_log_z(*g);
  } catch (const std::exception& e) {
    gen_error = e.what();
  }

  for (Method m : opt.methods) {
    std::vector<BenchRow> rows;
    for (int k : sorted) {
      BenchRow r;
      r.instance_id = id;
      r.seed = spec.seed;
      r.spec = spec;
      r.method = m;
      r.k = k;
      r.exact_log_z = exact;
      rows.push_back(r);
    }
    if (!g) {
      for (auto& r : rows) r.error = gen_error;
    } else {
      try {
        auto cfg = config_for(m, opt.build, opt.group_size);
        cfg.seed = spec.seed;
        const auto t0 = std::chrono::steady_clock::now();
        ModeTreeBuilder builder(*g, cfg);
        for (auto& r : rows) {
          builder.grow_to(r.k);
          const auto mix = builder.mixture();
          r.log_z_tilde = mix.log_z_tilde;
          if (exact) r.kl_gap = *exact - mix.log_z_tilde;
          r.leaves = mix.size();
          for (const auto& mode : mix.modes) r.feasible_leaves += mode.feasible ? 1 : 0;
          if (opt.timing)
            r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        }
      } catch (const std::exception& e) {
        for (auto& r : rows)
          if (!r.log_z_tilde) r.error = e.what();
        out.failures.push_back("instance " + std::to_string(id) + " " + to_string(m) + ": " + e.what());
      }
    }
    for (std::size_t a = 1; a < rows.size(); ++a) {
      const auto& prev = rows[a - 1];
      const auto& cur = rows[a];
      if (!prev.log_z_tilde || !cur.log_z_tilde) continue;
      if (prev.feasible_leaves != prev.leaves || cur.feasible_leaves != cur.leaves) continue;
      if (*cur.log_z_tilde < *prev.log_z_tilde - 1e-6)
        out.exceptions.push_back("instance " + std::to_string(id) + " " + to_string(m) + ": log_z_tilde fell from K=" +
                                 std::to_string(prev.k) + " to K=" + std::to_string(cur.k));
    }
    // report in the caller's K order
    for (int k : ks)
      for (const auto& r : rows)
        if (r.k == k) out.rows.push_back(r);
  }
  return out;
}

}  // namespace detail

/// Every instance and method, with nested trees grown through K_list.
/// Rows come back ordered by instance id whatever the number of workers.
inline ExperimentResult run_benchmark(const BenchOptions& opt) {
  opt.validate();
  const int total = opt.trials * static_cast<int>(opt.specs.size());
  std::vector<detail::InstanceOutcome> outcomes(total);
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int id = next++; id < total; id = next++) outcomes[id] = detail::run_instance(opt, id);
  };
  const int workers = std::min(opt.jobs, total);
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  ExperimentResult res;
  for (auto& o : outcomes) {
    res.rows.insert(res.rows.end(), o.rows.begin(), o.rows.end());
    res.exceptions.insert(res.exceptions.end(), o.exceptions.begin(), o.exceptions.end());
    res.failures.insert(res.failures.end(), o.failures.begin(), o.failures.end());
  }
  return res;
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_bench_csv(std::ostream& os, const ExperimentResult& res) {
  os << "instance_id,seed,topology,coupling,side,method,K,log_z_tilde,exact_log_z,kl_gap,feasible_leaves,wall_ms\n";
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  for (const auto& r : res.rows) {
    os << r.instance_id << ',' << r.seed << ',' << to_string(r.spec.topology) << ',' << to_string(r.spec.coupling) << ','
       << r.spec.side << ',' << to_string(r.method) << ',' << r.k << ',' << opt(r.log_z_tilde) << ','
       << opt(r.exact_log_z) << ',' << opt(r.kl_gap) << ',' << r.feasible_leaves << ',' << opt(r.wall_ms) << '\n';
  }
}

/// Best agreement (fraction of matching labels) between any mode's MAP and
/// any of the given reference labelings.
inline double best_mode_agreement(const Mixture& mix, const std::vector<Labeling>& truth) {
  detail::require(!truth.empty(), "best_mode_agreement: no reference labelings");
  double best = 0.0;
  for (int k = 0; k < mix.size(); ++k) {
    const auto x = mode_map(mix, k);
    for (const auto& t : truth) {
      detail::require(t.size() == x.size(), "best_mode_agreement: labeling length mismatch");
      int same = 0;
      for (std::size_t i = 0; i < x.size(); ++i) same += x[i] == t[i] ? 1 : 0;
      best = std::max(best, static_cast<double>(same) / x.size());
    }
  }
  return best;
}

}  // namespace mmmf
