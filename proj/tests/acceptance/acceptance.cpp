// Acceptance checks 1-12. One PASS/FAIL line per criterion; exit status is
// nonzero if any criterion fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>
#include <string>

#include "cli_app.hpp"
#include "oracles.hpp"

using namespace mmmf;

namespace {

struct Verdict {
  bool pass;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

template <typename... T>
std::string fmtn(const char* f, T... v) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, v...);
  return buf;
}

Verdict oracle_soundness() {
  Rng rng(101);
  double worst_err = 0.0, worst_ms = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + trial % 17;  // up to 18 variables
    const auto g = oracle::random_graph(rng, n, 2, rng.uniform(0.1, 0.9), rng.uniform(0.5, 5.0), 2.0);
    const auto t0 = std::chrono::steady_clock::now();
    const double got = exact_log_z(g);
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    worst_err = std::max(worst_err, std::abs(got - oracle::log_z(g)));
    worst_ms = std::max(worst_ms, ms);
  }
  return {worst_err <= 1e-9 && worst_ms < 1000.0, fmtn("max |err| %.3g, slowest %.1f ms", worst_err, worst_ms)};
}

Verdict variational_bound() {
  int ok = 0;
  double worst = -1e300;
  for (int trial = 0; trial < 100; ++trial) {
    GenSpec s;
    s.seed = 2000 + trial;
    const auto g = gen_crf(s);
    const auto r = mf_solve(g, noisy_uniform(16, 2, s.seed));
    const double excess = r.free_energy - exact_log_z(g);
    worst = std::max(worst, excess);
    ok += excess <= 1e-9 ? 1 : 0;
  }
  return {ok == 100, fmtn("%d/100 within bound, max A - log Z = %.3g", ok, worst)};
}

Verdict mixture_bound_and_kl() {
  const auto cfg = config_for(Method::mmmf_ours_m, {}, 3);
  int bound_ok = 0, kl_ok = 0, infeasible = 0;
  double worst_bound = -1e300, worst_kl = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    GenSpec s;
    s.seed = 3000 + trial;
    const auto g = gen_crf(s);
    const auto r = build_mmmf(g, 4, cfg);
    const double lz = exact_log_z(g);
    const double slack = oracle::slack(4, cfg.epsilon);
    for (const auto& m : r.mixture.modes) infeasible += m.feasible ? 0 : 1;
    const double excess = r.mixture.log_z_tilde - lz;
    const double kl_err = std::abs(oracle::mixture_kl(g, r.mixture) - (lz - r.mixture.log_z_tilde));
    worst_bound = std::max(worst_bound, excess);
    worst_kl = std::max(worst_kl, kl_err);
    bound_ok += excess <= slack ? 1 : 0;
    kl_ok += kl_err <= slack ? 1 : 0;
  }
  return {bound_ok == 50 && kl_ok == 50,
          fmtn("bound %d/50 (max excess %.3g), KL identity %d/50 (max err %.3g), slack %.3g, infeasible leaves %d",
               bound_ok, worst_bound, kl_ok, worst_kl, oracle::slack(4, 1e-4), infeasible)};
}

// mean kl_gap per (method, K) over the default 100-instance benchmark
std::map<std::pair<Method, int>, double> bench_means() {
  BenchOptions opt;
  opt.seed = 0;
  const auto res = run_benchmark(opt);
  std::map<std::pair<Method, int>, std::pair<double, int>> acc;
  for (const auto& r : res.rows) {
    if (!r.kl_gap) continue;
    auto& a = acc[{r.method, r.k}];
    a.first += *r.kl_gap;
    a.second += 1;
  }
  std::map<std::pair<Method, int>, double> out;
  for (const auto& [key, a] : acc) out[key] = a.second == 100 ? a.first / a.second : std::nan("");
  return out;
}

Verdict multi_mode_improvement(const std::map<std::pair<Method, int>, double>& mean) {
  bool decreasing = true;
  std::string trace;
  for (int k = 1; k <= 4; ++k) {
    const double v = mean.at({Method::mmmf_ours_m, k});
    trace += fmtn("%sK=%d %.4f", k == 1 ? "" : ", ", k, v);
    if (k > 1 && !(v < mean.at({Method::mmmf_ours_m, k - 1}))) decreasing = false;
  }
  const double drop = mean.at({Method::mmmf_ours_m, 1}) - mean.at({Method::mmmf_ours_m, 4});
  return {decreasing && drop >= 0.02, "mmmf_ours_m mean kl_gap " + trace + fmt(", drop %.4f", drop)};
}

Verdict baseline_ordering(const std::map<std::pair<Method, int>, double>& mean) {
  const double ours = mean.at({Method::mmmf_ours_m, 4}), base = mean.at({Method::base_maxw, 4});
  return {ours <= base + 0.01, fmtn("K=4 mean kl_gap: mmmf_ours_m %.4f, base_maxw %.4f, mmmf_ours_r %.4f", ours, base,
                                    mean.at({Method::mmmf_ours_r, 4}))};
}

// 25 binary variables exceed the enumeration cap, so the kl_gap improvement is
// measured as the increase of log Z~ (log Z cancels).
Verdict single_variable_null() {
  BenchOptions opt;
  opt.specs = {GenSpec{Topology::grid, 5, Coupling::attractive, 6.0, 2.0, 0}};
  opt.methods = {Method::entropy_single};
  opt.k_list = {1, 4};
  opt.trials = 100;
  opt.seed = 6;
  const auto res = run_benchmark(opt);
  double sum = 0.0;
  int n = 0;
  std::map<int, double> k1;
  for (const auto& r : res.rows)
    if (r.k == 1 && r.log_z_tilde) k1[r.instance_id] = *r.log_z_tilde;
  for (const auto& r : res.rows)
    if (r.k == 4 && r.log_z_tilde && k1.count(r.instance_id)) {
      sum += *r.log_z_tilde - k1[r.instance_id];
      ++n;
    }
  const double improvement = n > 0 ? sum / n : std::nan("");
  return {n == 100 && improvement < 0.005, fmtn("entropy_single mean improvement K=1 to K=4 %.4f nats over %d instances", improvement, n)};
}

Verdict critical_temperature_check() {
  bool pass = true;
  std::string detail;
  for (double gamma : {10.0, 6.0}) {
    DenseGaussianSpec s;
    s.gamma = gamma;
    const auto g = expand_dense_gaussian(s);
    const double tc = critical_temperature(s);
    std::vector<double> temps;
    for (double t = 0.5 * tc; t <= 1.5 * tc + 1e-9; t += 0.02 * tc) temps.push_back(t);
    const auto t = transition_temperature(tc_scan(g, temps, polarized_field(g.num_vars(), 2, 0.99), {}));
    const double lo = gamma == 10.0 ? 4.5 : 0.9 * tc, hi = gamma == 10.0 ? 5.5 : 1.1 * tc;
    const bool ok = t && *t >= lo && *t <= hi;
    pass = pass && ok;
    detail += fmtn("%sgamma %.0f: transition %.3f, window [%.2f, %.2f]", detail.empty() ? "" : "; ", gamma, t ? *t : -1.0, lo, hi);
  }
  return {pass, detail};
}

Verdict toy_bimodality() {
  int good = 0;
  std::string weights;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    ToyGridSpec s;
    s.seed = seed;
    const auto g = gen_toy_grid(s);
    BuildConfig cfg;
    cfg.seed = seed;
    const auto r = build_mmmf(g, 2, cfg);
    bool ok = r.mixture.size() == 2;
    if (ok) {
      const auto a = mode_map(r.mixture, 0), b = mode_map(r.mixture, 1);
      for (int i : toy_quadrant(s.side)) ok = ok && a[i] != b[i];
      for (const auto& m : r.mixture.modes) ok = ok && m.weight >= 0.3 && m.weight <= 0.7;
      weights += fmtn(" %.2f", r.mixture.modes[0].weight);
    }
    good += ok ? 1 : 0;
  }
  return {good >= 9, fmtn("%d/10 seeds complementary and balanced; m_0 per seed:", good) + weights};
}

Verdict cardinality_math() {
  Rng rng(909);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int size = 1 + static_cast<int>(rng.index(12));
    const int nl = 2 + static_cast<int>(rng.index(2));
    const auto q = oracle::random_field(rng, 12, nl);
    std::vector<int> vars(12);
    for (int i = 0; i < 12; ++i) vars[i] = i;
    CardinalityClause c;
    for (int k = 0; k < size; ++k) {
      std::swap(vars[k], vars[k + rng.index(12 - k)]);
      c.members.push_back({vars[k], static_cast<int>(rng.index(nl))});
    }
    c.threshold = static_cast<int>(rng.index(size + 1));
    c.direction = rng.uniform() < 0.5 ? Direction::at_least : Direction::less_than;
    worst = std::max(worst, std::abs(violation_prob_exact(q, c) - oracle::violation(q, c)));
  }
  double worst_gauss = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const auto q = oracle::random_field(rng, 20, 2);
    CardinalityClause c;
    for (int i = 0; i < 20; ++i) c.members.push_back({i, static_cast<int>(rng.index(2))});
    for (int t = 0; t <= 20; ++t)
      for (auto d : {Direction::at_least, Direction::less_than}) {
        c.threshold = t;
        c.direction = d;
        worst_gauss = std::max(worst_gauss, std::abs(violation_prob_gaussian(q, c).probability - oracle::violation(q, c)));
      }
  }
  return {worst <= 1e-10 && worst_gauss <= 0.05,
          fmtn("exact vs brute force max err %.3g over 1000 cases; gaussian L=20 max err %.4f", worst, worst_gauss)};
}

Verdict constrained_contract() {
  Rng rng(1010);
  int clamp_ok = 0;
  double worst_q = 1.0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto g = oracle::random_graph(rng, 8, 2, 0.5, 4.0, 2.0);
    const int var = static_cast<int>(rng.index(8)), v = static_cast<int>(rng.index(2));
    CardinalityClause c;
    c.members = {{var, v}};
    c.threshold = 1;
    const auto r = constrained_mf_solve(g, {c}, noisy_uniform(8, 2, trial));
    worst_q = std::min(worst_q, r.field(var, v));
    clamp_ok += r.feasible && r.field(var, v) >= 1.0 - c.epsilon * (1 + 1e-6) ? 1 : 0;
  }
  int same = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto g = oracle::random_graph(rng, 8, 3, 0.5, 4.0, 2.0);
    const auto init = noisy_uniform(8, 3, trial);
    const auto a = mf_solve(g, init);
    const auto b = constrained_mf_solve(g, {}, init);
    same += a.field == b.field && a.free_energy == b.free_energy ? 1 : 0;
  }
  return {clamp_ok == 50 && same == 20,
          fmtn("single-member clamp %d/50 (min q %.8f), empty-list identical %d/20", clamp_ok, worst_q, same)};
}

Verdict temporal_dp() {
  Rng rng(1111);
  int ok = 0, ties = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int steps = 1 + static_cast<int>(rng.index(6));
    const bool coarse = trial % 2 == 0;
    ModeSequenceProblem p;
    for (int t = 0; t < steps; ++t) {
      const int k = 1 + static_cast<int>(rng.index(4));
      std::vector<double> w(k);
      double s = 0.0;
      for (auto& x : w) s += x = coarse ? 1.0 + rng.index(2) : rng.uniform(0.05, 1.0);
      for (auto& x : w) x /= s;
      p.weights.push_back(w);
    }
    for (int t = 0; t + 1 < steps; ++t) {
      std::vector<double> tab(p.weights[t].size() * p.weights[t + 1].size());
      for (auto& c : tab) c = coarse ? 0.5 * rng.index(2) : rng.uniform(0.0, 2.0);
      p.transitions.push_back(tab);
    }
    const auto r = best_mode_sequence(p);
    const auto [x, c] = oracle::best_sequence(p);
    ok += r.modes == x && std::abs(r.cost - c) <= 1e-12 ? 1 : 0;
    ties += coarse ? 1 : 0;
  }
  return {ok == 100, fmtn("%d/100 match exhaustive search (%d tie-prone instances)", ok, ties)};
}

Verdict determinism() {
  const std::vector<std::string> args{"bench", "--trials", "20", "--seed", "12"};
  std::ostringstream a, b, err;
  const int ca = cli::run(args, a, err), cb = cli::run(args, b, err);
  const bool same = ca == 0 && cb == 0 && a.str() == b.str() && !a.str().empty();
  return {same, fmtn("two bench runs: exit %d/%d, %zu bytes, identical=%s", ca, cb, a.str().size(), same ? "yes" : "no")};
}

}  // namespace

int main() {
  std::map<std::pair<Method, int>, double> means;
  auto means_once = [&]() -> const std::map<std::pair<Method, int>, double>& {
    if (means.empty()) means = bench_means();
    return means;
  };
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria{
      {"oracle soundness", oracle_soundness},
      {"variational bound", variational_bound},
      {"mixture bound and KL identity", mixture_bound_and_kl},
      {"multi-mode improvement", [&] { return multi_mode_improvement(means_once()); }},
      {"baseline ordering", [&] { return baseline_ordering(means_once()); }},
      {"single-variable null result", single_variable_null},
      {"critical temperature", critical_temperature_check},
      {"toy bimodality", toy_bimodality},
      {"cardinality math", cardinality_math},
      {"constrained-solve contract", constrained_contract},
      {"temporal DP", temporal_dp},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    Verdict v;
    try {
      v = criteria[k].second();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    failed += v.pass ? 0 : 1;
    std::printf("%-4s criterion %2zu (%s): %s\n", v.pass ? "PASS" : "FAIL", k + 1, criteria[k].first, v.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria pass\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
