#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "mmmf/mmmf.hpp"
#include "oracles.hpp"

using namespace mmmf;

namespace {

double coupling(const Edge& e) { return e.w[1]; }  // w * 1[x_i != x_j]

BenchOptions small_bench(int trials) {
  BenchOptions o;
  o.trials = trials;
  o.seed = 7;
  return o;
}

}  // namespace

TEST(GenCrf, GridHasTwentyFourEdgesOnFourByFour) {
  GenSpec s;
  s.seed = 3;
  const auto g = gen_crf(s);
  EXPECT_EQ(g.num_vars(), 16);
  EXPECT_EQ(g.num_labels(), 2);
  ASSERT_EQ(g.edges().size(), 24u);
  for (const auto& e : g.edges()) {
    const int d = e.j - e.i;
    EXPECT_TRUE((d == 1 && e.i % 4 != 3) || d == 4) << e.i << "-" << e.j;
  }
}

TEST(GenCrf, RandomTopologyMatchesGridEdgeCount) {
  GenSpec s;
  s.topology = Topology::random;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    s.seed = seed;
    const auto g = gen_crf(s);
    ASSERT_EQ(g.edges().size(), 24u);
    std::set<std::pair<int, int>> seen;
    for (const auto& e : g.edges()) {
      EXPECT_LT(e.i, e.j);
      EXPECT_TRUE(seen.insert({e.i, e.j}).second);
    }
  }
}

TEST(GenCrf, CouplingRanges) {
  GenSpec s;
  double min_mixed = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    s.seed = seed;
    s.coupling = Coupling::attractive;
    const auto att = gen_crf(s);
    for (const auto& e : att.edges()) {
      EXPECT_GE(coupling(e), 0.0);
      EXPECT_LE(coupling(e), 6.0);
      EXPECT_EQ(e.w[0], 0.0);
      EXPECT_EQ(e.w[3], 0.0);
      EXPECT_EQ(e.w[1], e.w[2]);
    }
    s.coupling = Coupling::mixed;
    const auto g = gen_crf(s);
    for (const auto& e : g.edges()) {
      EXPECT_GE(coupling(e), -6.0);
      EXPECT_LE(coupling(e), 6.0);
      min_mixed = std::min(min_mixed, coupling(e));
    }
    for (int i = 0; i < 16; ++i) {
      EXPECT_LE(std::abs(g.unary(i)[0]), 2.0);
      EXPECT_EQ(g.unary(i)[1], 0.0);
    }
  }
  EXPECT_LT(min_mixed, -3.0);
}

TEST(GenCrf, SeedDeterminesTheInstance) {
  GenSpec s;
  s.seed = 99;
  const auto a = gen_crf(s), b = gen_crf(s);
  EXPECT_TRUE(std::equal(a.unaries().begin(), a.unaries().end(), b.unaries().begin()));
  for (std::size_t e = 0; e < a.edges().size(); ++e) EXPECT_EQ(a.edges()[e].w, b.edges()[e].w);
  s.seed = 100;
  EXPECT_NE(gen_crf(s).edges()[0].w, a.edges()[0].w);
}

TEST(GenCrf, RejectsBadSpecs) {
  GenSpec s;
  s.side = 1;
  EXPECT_THROW(gen_crf(s), InvalidInput);
  s = {};
  s.pairwise_hi = -1;
  EXPECT_THROW(gen_crf(s), InvalidInput);
}

TEST(ToyGrid, EqualCouplingsGiveAHomogeneousGrid) {
  ToyGridSpec s;
  s.side = 8;
  s.strong_w = s.weak_w = 1.5;
  const auto g = gen_toy_grid(s);
  EXPECT_EQ(g.edges().size(), static_cast<std::size_t>(grid_edge_count(8)));
  for (const auto& e : g.edges()) EXPECT_EQ(coupling(e), 1.5);
}

TEST(ToyGrid, StrongEdgesOnlyInsideRightQuadrants) {
  ToyGridSpec s;
  s.side = 8;
  const auto g = gen_toy_grid(s);
  for (const auto& e : g.edges()) {
    const int r1 = e.i / 8, c1 = e.i % 8, r2 = e.j / 8, c2 = e.j % 8;
    const bool strong = c1 >= 4 && c2 >= 4 && (r1 >= 4) == (r2 >= 4);
    EXPECT_EQ(coupling(e), strong ? 4.0 : 0.5) << e.i << "-" << e.j;
  }
}

TEST(ToyGrid, ZeroBiasGivesZeroUnaries) {
  ToyGridSpec s;
  s.side = 6;
  s.bias = 0.0;
  const auto g = gen_toy_grid(s);
  for (double u : g.unaries()) EXPECT_EQ(u, 0.0);
}

TEST(ToyGrid, TopHalfFavoursLabelOne) {
  const auto g = gen_toy_grid({});
  for (int i = 0; i < 128; ++i) EXPECT_EQ(g.unary(i)[0], 2.0);
  for (int i = 128; i < 256; ++i) EXPECT_LE(std::abs(g.unary(i)[0]), 2.0);
  const auto r = mf_solve(g, noisy_uniform(256, 2, 1));
  for (int i = 0; i < 128; ++i) EXPECT_GT(r.field(i, 1), 0.9);
  // the strongly coupled bottom-right quadrant polarizes one way or the other
  for (int i : toy_quadrant(16)) EXPECT_LT(entropy(r.field.row(i)), 0.2) << i;
}

TEST(ToyGrid, QuadrantIndices) {
  EXPECT_EQ(toy_quadrant(4), (std::vector<int>{10, 11, 14, 15}));
  EXPECT_EQ(toy_quadrant(16).size(), 64u);
}

TEST(Methods, NamesRoundTrip) {
  for (Method m : {Method::mmmf_ours_m, Method::mmmf_ours_r, Method::base_maxw, Method::entropy_single})
    EXPECT_EQ(parse_method(to_string(m)), m);
  EXPECT_FALSE(parse_method("nope").has_value());
}

TEST(RunBenchmark, SingleModeIsTheSameForEveryMethod) {
  auto o = small_bench(10);
  o.k_list = {1};
  const auto res = run_benchmark(o);
  ASSERT_EQ(res.rows.size(), 10u * 4);
  for (std::size_t r = 0; r < res.rows.size(); r += 4)
    for (int m = 1; m < 4; ++m) {
      ASSERT_TRUE(res.rows[r + m].log_z_tilde);
      EXPECT_EQ(*res.rows[r + m].log_z_tilde, *res.rows[r].log_z_tilde);
    }
}

TEST(RunBenchmark, GapsAreNonNegativeUpToSlack) {
  auto o = small_bench(10);
  const auto res = run_benchmark(o);
  EXPECT_TRUE(res.failures.empty());
  ASSERT_EQ(res.rows.size(), 10u * 4 * 4);
  for (const auto& r : res.rows) {
    ASSERT_TRUE(r.kl_gap && r.exact_log_z && r.log_z_tilde);
    EXPECT_NEAR(*r.kl_gap, *r.exact_log_z - *r.log_z_tilde, 1e-12);
    EXPECT_GE(*r.kl_gap, -oracle::slack(r.k, o.build.epsilon));
    EXPECT_LE(r.leaves, r.k);
    EXPECT_LE(r.feasible_leaves, r.leaves);
    EXPECT_FALSE(r.wall_ms.has_value());
  }
}

TEST(RunBenchmark, ExactLogZAgreesWithEnumeration) {
  auto o = small_bench(5);
  o.k_list = {1};
  o.methods = {Method::base_maxw};
  for (const auto& r : run_benchmark(o).rows) EXPECT_NEAR(*r.exact_log_z, oracle::log_z(gen_crf(r.spec)), 1e-9);
}

TEST(RunBenchmark, RowsKeepTheRequestedKOrder) {
  auto o = small_bench(2);
  o.k_list = {3, 1, 2};
  o.methods = {Method::mmmf_ours_m};
  const auto res = run_benchmark(o);
  ASSERT_EQ(res.rows.size(), 6u);
  EXPECT_EQ(res.rows[0].k, 3);
  EXPECT_EQ(res.rows[1].k, 1);
  EXPECT_EQ(res.rows[2].k, 2);
}

TEST(RunBenchmark, CsvIsDeterministicAndIndependentOfWorkers) {
  auto o = small_bench(8);
  o.k_list = {1, 3};
  std::ostringstream a, b, c;
  write_bench_csv(a, run_benchmark(o));
  write_bench_csv(b, run_benchmark(o));
  o.jobs = 4;
  write_bench_csv(c, run_benchmark(o));
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(a.str(), c.str());
  EXPECT_EQ(a.str().substr(0, a.str().find('\n')),
            "instance_id,seed,topology,coupling,side,method,K,log_z_tilde,exact_log_z,kl_gap,feasible_leaves,wall_ms");
  const auto csv = a.str();
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 8 * 4 * 2);
}

TEST(RunBenchmark, TimingFillsWallClock) {
  auto o = small_bench(1);
  o.k_list = {1};
  o.timing = true;
  for (const auto& r : run_benchmark(o).rows) {
    ASSERT_TRUE(r.wall_ms);
    EXPECT_GE(*r.wall_ms, 0.0);
  }
}

TEST(RunBenchmark, InstanceSeedsDiffer) {
  std::set<std::uint64_t> seen;
  for (int id = 0; id < 1000; ++id) seen.insert(instance_seed(5, id));
  EXPECT_EQ(seen.size(), 1000u);
  EXPECT_NE(instance_seed(5, 0), instance_seed(6, 0));
}

TEST(RunBenchmark, RejectsBadOptions) {
  auto o = small_bench(1);
  o.k_list = {0};
  EXPECT_THROW(run_benchmark(o), InvalidInput);
  o = small_bench(0);
  EXPECT_THROW(run_benchmark(o), InvalidInput);
}

TEST(FormatDouble, RoundTrips) {
  Rng rng(1);
  for (int k = 0; k < 1000; ++k) {
    const double v = rng.uniform(-1e3, 1e3);
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
}
