#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "mmmf/marginal_field.hpp"
#include "mmmf/model.hpp"
#include "mmmf/rng.hpp"

namespace mmmf {

struct SolverConfig {
  int max_sweeps = 500;
  double damping = 0.5;  // weight kept from the previous iterate
  double tol = 1e-6;     // max-norm change that counts as converged
  double floor = 1e-12;  // smallest probability a row may hold

  void validate(int num_labels) const {
    detail::require(max_sweeps >= 1, "SolverConfig: max_sweeps must be >= 1");
    detail::require(damping >= 0.0 && damping < 1.0, "SolverConfig: damping must lie in [0,1)");
    detail::require(tol > 0.0, "SolverConfig: tol must be > 0");
    detail::require(floor > 0.0 && floor < 1.0 / num_labels, "SolverConfig: floor must lie in (0, 1/num_labels)");
  }
};

struct MfResult {
  MarginalField field;
  double free_energy = 0.0;
  int sweeps = 0;
  bool converged = false;
};

inline void check_field_matches(const FactorGraph& g, const MarginalField& q) {
  detail::require(q.num_vars() == g.num_vars() && q.num_labels() == g.num_labels(),
                  "marginal field dimensions do not match the graph");
  q.validate();
}

/// E_Q[-E] + H(Q): the variational lower bound on log Z attained by Q.
inline double free_energy(const FactorGraph& g, const MarginalField& q) {
  check_field_matches(g, q);
  const int nl = g.num_labels();
  double value = 0.0;
  for (int i = 0; i < g.num_vars(); ++i) {
    const auto qi = q.row(i);
    const auto ui = g.unary(i);
    for (int l = 0; l < nl; ++l) {
      value -= qi[l] * ui[l];
      if (qi[l] > 0.0) value -= qi[l] * std::log(qi[l]);
    }
  }
  for (const auto& e : g.edges()) {
    const auto qi = q.row(e.i);
    const auto qj = q.row(e.j);
    for (int a = 0; a < nl; ++a) {
      if (qi[a] == 0.0) continue;
      double inner = 0.0;
      for (int b = 0; b < nl; ++b) inner += qj[b] * e.w[static_cast<std::size_t>(a) * nl + b];
      value -= qi[a] * inner;
    }
  }
  return value;
}

/// Entropy of a probability row normalized by log(#labels), so it lies in [0,1].
inline double entropy(std::span<const double> row) {
  double h = 0.0;
  for (double p : row)
    if (p > 0.0) h -= p * std::log(p);
  return h / std::log(static_cast<double>(row.size()));
}

/// Uniform rows perturbed by independent noise of the given magnitude.
inline MarginalField noisy_uniform(int num_vars, int num_labels, std::uint64_t seed, double magnitude = 1e-3) {
  auto rng = Rng::stream(seed, "init/v1");
  std::vector<double> q(static_cast<std::size_t>(num_vars) * num_labels);
  for (int i = 0; i < num_vars; ++i) {
    double s = 0.0;
    for (int l = 0; l < num_labels; ++l) {
      auto& p = q[static_cast<std::size_t>(i) * num_labels + l];
      p = 1.0 / num_labels + rng.uniform(-magnitude, magnitude);
      s += p;
    }
    for (int l = 0; l < num_labels; ++l) q[static_cast<std::size_t>(i) * num_labels + l] /= s;
  }
  return MarginalField(num_vars, num_labels, std::move(q));
}

namespace detail {

// out <- softmax(-energies), with every entry raised to at least `floor`; the
// mass this adds is taken from the largest entry.
inline void softmin_with_floor(std::span<const double> energies, std::span<double> out, double floor) {
  const double lo = *std::min_element(energies.begin(), energies.end());
  double s = 0.0;
  for (std::size_t l = 0; l < energies.size(); ++l) {
    out[l] = std::exp(lo - energies[l]);
    s += out[l];
  }
  std::size_t top = 0;
  double added = 0.0;
  for (std::size_t l = 0; l < out.size(); ++l) {
    out[l] /= s;
    if (out[l] > out[top]) top = l;
  }
  for (std::size_t l = 0; l < out.size(); ++l) {
    if (out[l] < floor) {
      added += floor - out[l];
      out[l] = floor;
    }
  }
  out[top] -= added;
}

struct NoExtraEnergy {
  void operator()(int, const MarginalField&, std::span<double>) const {}
};

/// Sequential damped coordinate updates in ascending variable order.
/// `extra(i, q, energies)` may add further energy terms to variable i's
/// local energy row before normalization.
template <typename ExtraEnergy>
MfResult coordinate_ascent(const FactorGraph& g, const MarginalField& init, const SolverConfig& cfg,
                           ExtraEnergy&& extra) {
  check_field_matches(g, init);
  cfg.validate(g.num_labels());
  const int nl = g.num_labels();
  MarginalField q = init;
  std::vector<double> local(nl), target(nl);
  MfResult result;
  for (int sweep = 1; sweep <= cfg.max_sweeps; ++sweep) {
    double change = 0.0;
    for (int i = 0; i < g.num_vars(); ++i) {
      const auto ui = g.unary(i);
      std::copy(ui.begin(), ui.end(), local.begin());
      for (const auto& inc : g.neighbors(i)) {
        const auto qj = q.row(inc.other);
        for (int a = 0; a < nl; ++a) {
          double s = 0.0;
          for (int b = 0; b < nl; ++b) s += qj[b] * g.pair_energy(inc, a, b);
          local[a] += s;
        }
      }
      extra(i, static_cast<const MarginalField&>(q), std::span<double>(local));
      softmin_with_floor(local, target, cfg.floor);
      auto qi = q.row(i);
      for (int l = 0; l < nl; ++l) {
        const double next = cfg.damping == 0.0 ? target[l] : (1.0 - cfg.damping) * target[l] + cfg.damping * qi[l];
        change = std::max(change, std::abs(next - qi[l]));
        qi[l] = next;
      }
    }
    result.sweeps = sweep;
    if (change < cfg.tol) {
      result.converged = true;
      break;
    }
  }
  result.free_energy = free_energy(g, q);
  result.field = std::move(q);
  return result;
}

}  // namespace detail

/// Unconstrained mean field from `init`; returns the final field and its free energy.
inline MfResult mf_solve(const FactorGraph& g, const MarginalField& init, const SolverConfig& cfg = {}) {
  return detail::coordinate_ascent(g, init, cfg, detail::NoExtraEnergy{});
}

/// Per-variable argmax; ties go to the lowest label.
inline Labeling argmax_labels(const MarginalField& q) {
  Labeling x(q.num_vars());
  for (int i = 0; i < q.num_vars(); ++i) {
    const auto r = q.row(i);
    x[i] = static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
  }
  return x;
}

}  // namespace mmmf
