#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mmmf/error.hpp"
#include "mmmf/marginal_field.hpp"

namespace mmmf {

using Labeling = std::vector<int>;

/// Pairwise factor between variables i and j. The table is row-major with
/// rows indexed by the label of i: w[a * num_labels + b] is the energy of
/// (x_i = a, x_j = b).
struct Edge {
  int i = 0;
  int j = 0;
  std::vector<double> w;
};

/// Discrete pairwise CRF with a shared label set. Energies are stored at
/// temperature 1; lower energy means more probable. Immutable once built.
class FactorGraph {
 public:
  struct Incidence {
    int other;
    std::size_t edge;
    bool first;  // true when this variable is the edge's `i`
  };

  FactorGraph() = default;

  FactorGraph(int num_vars, int num_labels, std::vector<double> unaries, std::vector<Edge> edges)
      : num_vars_(num_vars), num_labels_(num_labels), unaries_(std::move(unaries)), edges_(std::move(edges)) {
    detail::require(num_vars >= 1, "FactorGraph: num_vars must be >= 1");
    detail::require(num_labels >= 2, "FactorGraph: num_labels must be >= 2");
    detail::require(unaries_.size() == static_cast<std::size_t>(num_vars) * num_labels,
                    "FactorGraph: unary table must be num_vars x num_labels");
    for (double u : unaries_) detail::require(std::isfinite(u), "FactorGraph: non-finite unary entry");
    std::set<std::pair<int, int>> seen;
    const auto table = static_cast<std::size_t>(num_labels) * num_labels;
    for (const auto& e : edges_) {
      detail::require(e.i >= 0 && e.i < num_vars && e.j >= 0 && e.j < num_vars, "FactorGraph: edge endpoint out of range");
      detail::require(e.i != e.j, "FactorGraph: self-loop edge");
      detail::require(e.w.size() == table, "FactorGraph: pairwise table must be num_labels x num_labels");
      for (double w : e.w) detail::require(std::isfinite(w), "FactorGraph: non-finite pairwise entry");
      auto key = std::minmax(e.i, e.j);
      detail::require(seen.insert(key).second, "FactorGraph: duplicate edge (" + std::to_string(key.first) + "," +
                                                   std::to_string(key.second) + ")");
    }
    adjacency_.resize(num_vars);
    for (std::size_t k = 0; k < edges_.size(); ++k) {
      adjacency_[edges_[k].i].push_back({edges_[k].j, k, true});
      adjacency_[edges_[k].j].push_back({edges_[k].i, k, false});
    }
  }

  int num_vars() const { return num_vars_; }
  int num_labels() const { return num_labels_; }
  std::span<const double> unaries() const { return unaries_; }
  std::span<const double> unary(int i) const {
    return std::span<const double>(unaries_).subspan(static_cast<std::size_t>(i) * num_labels_, num_labels_);
  }
  const std::vector<Edge>& edges() const { return edges_; }
  std::span<const Incidence> neighbors(int i) const { return adjacency_[i]; }

  // Energy of (x_i = a, x_other = b) through incidence `inc` of variable i.
  double pair_energy(const Incidence& inc, int a, int b) const {
    const auto& w = edges_[inc.edge].w;
    return inc.first ? w[static_cast<std::size_t>(a) * num_labels_ + b]
                     : w[static_cast<std::size_t>(b) * num_labels_ + a];
  }

  // log of the number of labelings
  double log_state_count() const { return num_vars_ * std::log(static_cast<double>(num_labels_)); }

 private:
  int num_vars_ = 0;
  int num_labels_ = 2;
  std::vector<double> unaries_;
  std::vector<Edge> edges_;
  std::vector<std::vector<Incidence>> adjacency_;
};

inline void validate_labeling(const FactorGraph& g, const Labeling& x) {
  detail::require(x.size() == static_cast<std::size_t>(g.num_vars()), "labeling length does not match num_vars");
  for (int v : x) detail::require(v >= 0 && v < g.num_labels(), "labeling entry out of label range");
}

inline double energy(const FactorGraph& g, const Labeling& x) {
  validate_labeling(g, x);
  const int nl = g.num_labels();
  double e = 0.0;
  for (int i = 0; i < g.num_vars(); ++i) e += g.unary(i)[x[i]];
  for (const auto& edge : g.edges()) e += edge.w[static_cast<std::size_t>(x[edge.i]) * nl + x[edge.j]];
  return e;
}

/// Graph for P^T: every energy entry divided by T.
inline FactorGraph temper(const FactorGraph& g, double temperature) {
  detail::require(temperature > 0.0 && std::isfinite(temperature), "temper: temperature must be > 0");
  if (temperature == 1.0) return g;
  std::vector<double> un(g.unaries().begin(), g.unaries().end());
  for (auto& u : un) u /= temperature;
  std::vector<Edge> edges = g.edges();
  for (auto& e : edges)
    for (auto& w : e.w) w /= temperature;
  return FactorGraph(g.num_vars(), g.num_labels(), std::move(un), std::move(edges));
}

inline constexpr std::uint64_t kDefaultEnumerationCap = std::uint64_t{1} << 22;

inline std::uint64_t state_count_or_refuse(const FactorGraph& g, std::uint64_t cap) {
  std::uint64_t n = 1;
  for (int i = 0; i < g.num_vars(); ++i) {
    if (n > cap / static_cast<std::uint64_t>(g.num_labels()))
      throw EnumerationRefused("state space exceeds enumeration cap of " + std::to_string(cap) + " states");
    n *= static_cast<std::uint64_t>(g.num_labels());
  }
  return n;
}

inline bool enumerable(const FactorGraph& g, std::uint64_t cap = kDefaultEnumerationCap) {
  try {
    state_count_or_refuse(g, cap);
    return true;
  } catch (const EnumerationRefused&) {
    return false;
  }
}

/// Calls fn(x, energy) for every labeling in odometer order (variable 0 fastest).
template <typename Fn>
void for_each_labeling(const FactorGraph& g, std::uint64_t cap, Fn&& fn) {
  const std::uint64_t n = state_count_or_refuse(g, cap);
  Labeling x(g.num_vars(), 0);
  const int nl = g.num_labels();
  for (std::uint64_t s = 0; s < n; ++s) {
    double e = 0.0;
    for (int i = 0; i < g.num_vars(); ++i) e += g.unary(i)[x[i]];
    for (const auto& edge : g.edges()) e += edge.w[static_cast<std::size_t>(x[edge.i]) * nl + x[edge.j]];
    fn(static_cast<const Labeling&>(x), e);
    for (int i = 0; i < g.num_vars(); ++i) {
      if (++x[i] < nl) break;
      x[i] = 0;
    }
  }
}

/// Streaming log-sum-exp accumulator.
class LogSumExp {
 public:
  void add(double v) {
    if (v == -std::numeric_limits<double>::infinity()) return;
    if (v <= max_) {
      sum_ += std::exp(v - max_);
    } else {
      sum_ = sum_ * std::exp(max_ - v) + 1.0;
      max_ = v;
    }
  }
  double value() const {
    return sum_ == 0.0 ? -std::numeric_limits<double>::infinity() : max_ + std::log(sum_);
  }

 private:
  double max_ = -std::numeric_limits<double>::infinity();
  double sum_ = 0.0;
};

inline double exact_log_z(const FactorGraph& g, std::uint64_t cap = kDefaultEnumerationCap) {
  LogSumExp acc;
  for_each_labeling(g, cap, [&](const Labeling&, double e) { acc.add(-e); });
  return acc.value();
}

inline MarginalField exact_marginals(const FactorGraph& g, std::uint64_t cap = kDefaultEnumerationCap) {
  const double log_z = exact_log_z(g, cap);
  const int nl = g.num_labels();
  std::vector<double> m(static_cast<std::size_t>(g.num_vars()) * nl, 0.0);
  for_each_labeling(g, cap, [&](const Labeling& x, double e) {
    const double p = std::exp(-e - log_z);
    for (int i = 0; i < g.num_vars(); ++i) m[static_cast<std::size_t>(i) * nl + x[i]] += p;
  });
  // absorb rounding so that rows sum to one
  for (int i = 0; i < g.num_vars(); ++i) {
    double s = 0.0;
    for (int l = 0; l < nl; ++l) s += m[static_cast<std::size_t>(i) * nl + l];
    for (int l = 0; l < nl; ++l) m[static_cast<std::size_t>(i) * nl + l] /= s;
  }
  return MarginalField(g.num_vars(), nl, std::move(m));
}

inline std::vector<double> potts_table(int num_labels, double w) {
  std::vector<double> t(static_cast<std::size_t>(num_labels) * num_labels, w);
  for (int l = 0; l < num_labels; ++l) t[static_cast<std::size_t>(l) * num_labels + l] = 0.0;
  return t;
}

/// Binary grid with a Gaussian spatial kernel over pixel distance.
struct DenseGaussianSpec {
  int grid_side = 16;
  double gamma = 10.0;
  double sigma = 2.0;
  double theta_rgb = 1.0;
  double unary_bias = 0.0;
  // Wrap distances around the grid so that every pixel sees the same
  // neighbourhood (the infinite-lattice setting of the critical-temperature
  // analysis).
  bool periodic = true;
  // Pairs farther apart than truncation * sigma are dropped.
  double truncation = 3.0;

  void validate() const {
    detail::require(grid_side >= 2, "DenseGaussianSpec: grid_side must be >= 2");
    detail::require(gamma > 0.0, "DenseGaussianSpec: gamma must be > 0");
    detail::require(sigma > 0.0, "DenseGaussianSpec: sigma must be > 0");
    detail::require(theta_rgb >= 0.0 && theta_rgb <= 1.0, "DenseGaussianSpec: theta_rgb must lie in [0,1]");
    detail::require(std::isfinite(unary_bias), "DenseGaussianSpec: unary_bias must be finite");
    detail::require(truncation > 0.0, "DenseGaussianSpec: truncation must be > 0");
  }
};

inline double dense_gaussian_weight(const DenseGaussianSpec& s, double squared_distance) {
  return s.gamma * s.theta_rgb / (2.0 * std::numbers::pi * s.sigma * s.sigma) *
         std::exp(-squared_distance / (2.0 * s.sigma * s.sigma));
}

inline FactorGraph expand_dense_gaussian(const DenseGaussianSpec& s) {
  s.validate();
  const int n = s.grid_side;
  const double radius = s.truncation * s.sigma;
  const int reach = static_cast<int>(std::floor(radius));
  std::map<std::pair<int, int>, double> pair_weight;
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      const int p = r * n + c;
      for (int dr = -reach; dr <= reach; ++dr) {
        for (int dc = -reach; dc <= reach; ++dc) {
          const double d2 = static_cast<double>(dr * dr + dc * dc);
          if (d2 == 0.0 || d2 > radius * radius) continue;
          int r2 = r + dr, c2 = c + dc;
          if (s.periodic) {
            r2 = ((r2 % n) + n) % n;
            c2 = ((c2 % n) + n) % n;
          } else if (r2 < 0 || r2 >= n || c2 < 0 || c2 >= n) {
            continue;
          }
          const int q = r2 * n + c2;
          // each unordered pair is visited from both ends; keep one visit
          if (q <= p) continue;
          pair_weight[{p, q}] += dense_gaussian_weight(s, d2);
        }
      }
    }
  }
  std::vector<Edge> edges;
  edges.reserve(pair_weight.size());
  for (const auto& [key, w] : pair_weight) edges.push_back({key.first, key.second, potts_table(2, w)});
  std::vector<double> unaries(static_cast<std::size_t>(n) * n * 2, 0.0);
  for (int i = 0; i < n * n; ++i) unaries[static_cast<std::size_t>(i) * 2] = s.unary_bias;
  return FactorGraph(n * n, 2, std::move(unaries), std::move(edges));
}

}  // namespace mmmf
