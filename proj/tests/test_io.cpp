#include <gtest/gtest.h>

#include <filesystem>

#include "mmmf/mmmf.hpp"
#include "oracles.hpp"

using namespace mmmf;
using io::json;

namespace {

json reparse(const json& j) { return json::parse(j.dump()); }

void expect_same_graph(const FactorGraph& a, const FactorGraph& b) {
  ASSERT_EQ(a.num_vars(), b.num_vars());
  ASSERT_EQ(a.num_labels(), b.num_labels());
  EXPECT_TRUE(std::equal(a.unaries().begin(), a.unaries().end(), b.unaries().begin()));
  ASSERT_EQ(a.edges().size(), b.edges().size());
  for (std::size_t e = 0; e < a.edges().size(); ++e) {
    EXPECT_EQ(a.edges()[e].i, b.edges()[e].i);
    EXPECT_EQ(a.edges()[e].j, b.edges()[e].j);
    EXPECT_EQ(a.edges()[e].w, b.edges()[e].w);
  }
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("mmmf_io_" + name)).string();
}

}  // namespace

TEST(GraphJson, RoundTripIsBitExact) {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const auto g = oracle::random_graph(rng, 6, 2 + trial % 3, 0.5, 3.7, 1.3);
    expect_same_graph(g, io::graph_from_json(reparse(io::graph_to_json(g))));
  }
}

TEST(GraphJson, FileRoundTrip) {
  GenSpec s;
  s.seed = 4;
  const auto g = gen_crf(s);
  const auto path = temp_path("graph.json");
  io::save_graph(path, g);
  expect_same_graph(g, io::load_graph(path));
  std::filesystem::remove(path);
}

TEST(GraphJson, EdgesAreOptional) {
  const auto g = io::graph_from_json(json::parse(R"({"num_vars": 2, "num_labels": 2, "unaries": [[0, 1], [1, 0]]})"));
  EXPECT_TRUE(g.edges().empty());
  EXPECT_EQ(g.unary(0)[1], 1.0);
}

TEST(GraphJson, RejectsMalformedDocuments) {
  EXPECT_THROW(io::graph_from_json(json::parse(R"({"num_labels": 2, "unaries": [[0, 1]]})")), InvalidInput);
  EXPECT_THROW(io::graph_from_json(json::parse(R"({"num_vars": "x", "num_labels": 2, "unaries": [[0, 1]]})")),
               InvalidInput);
  EXPECT_THROW(io::graph_from_json(json::parse(R"({"num_vars": 2, "num_labels": 2, "unaries": [[0, 1]]})")),
               InvalidInput);
  EXPECT_THROW(io::graph_from_json(json::parse(
                   R"({"num_vars": 2, "num_labels": 2, "unaries": [[0, 1], [0, 0]], "edges": [{"i": 0, "j": 5, "w": [[0, 1], [1, 0]]}]})")),
               InvalidInput);
  EXPECT_THROW(io::graph_from_json(json::parse(
                   R"({"num_vars": 2, "num_labels": 2, "unaries": [[0, 1], [0, 0]], "edges": [{"i": 0, "j": 1, "w": [[0, 1]]}]})")),
               InvalidInput);
}

TEST(FieldJson, RoundTripIsBitExact) {
  Rng rng(2);
  const auto q = oracle::random_field(rng, 7, 3);
  EXPECT_EQ(io::field_from_json(reparse(io::field_to_json(q))), q);
  EXPECT_THROW(io::field_from_json(json::parse("[[0.5, 0.6]]")), InvalidInput);
  EXPECT_THROW(io::field_from_json(json::parse("[]")), InvalidInput);
}

TEST(ClauseJson, RoundTrip) {
  CardinalityClause c;
  c.members = {{3, 1}, {0, 0}, {7, 1}};
  c.threshold = 2;
  c.direction = Direction::less_than;
  c.epsilon = 0.0123;
  const auto j = io::clause_to_json(c);
  EXPECT_EQ(j.at("dir"), "less_than");
  EXPECT_EQ(io::clause_from_json(reparse(j)), c);
}

TEST(ClauseJson, RejectsBadClauses) {
  EXPECT_THROW(io::clause_from_json(json::parse(R"({"members": [[0, 1]], "C": 1, "dir": "most", "eps": 0.1})")),
               InvalidInput);
  EXPECT_THROW(io::clause_from_json(json::parse(R"({"members": [[0, 1], [0, 0]], "C": 1, "dir": "at_least", "eps": 0.1})")),
               InvalidInput);
  EXPECT_THROW(io::clause_from_json(json::parse(R"({"members": [[0]], "C": 1, "dir": "at_least", "eps": 0.1})")),
               InvalidInput);
  EXPECT_THROW(io::clause_from_json(json::parse(R"({"members": [[0, 1]], "C": 1, "dir": "at_least"})")), InvalidInput);
}

TEST(MixtureJson, TreeAndModesRoundTrip) {
  const auto g = oracle::ring(5, 3.0);
  BuildConfig cfg;
  cfg.threshold = ThresholdPolicy::half;
  const auto r = build_mmmf(g, 3, cfg);
  const auto loaded = io::mixture_from_json(reparse(io::mixture_to_json(r.tree, r.mixture)));
  EXPECT_EQ(loaded.mixture.log_z_tilde, r.mixture.log_z_tilde);
  ASSERT_EQ(loaded.mixture.size(), r.mixture.size());
  for (int k = 0; k < r.mixture.size(); ++k) {
    EXPECT_EQ(loaded.mixture.modes[k].field, r.mixture.modes[k].field);
    EXPECT_EQ(loaded.mixture.modes[k].free_energy, r.mixture.modes[k].free_energy);
    EXPECT_EQ(loaded.mixture.modes[k].weight, r.mixture.modes[k].weight);
    EXPECT_EQ(loaded.mixture.modes[k].feasible, r.mixture.modes[k].feasible);
  }
  ASSERT_EQ(loaded.tree.nodes.size(), r.tree.nodes.size());
  for (std::size_t n = 0; n < r.tree.nodes.size(); ++n) {
    EXPECT_EQ(loaded.tree.nodes[n].parent, r.tree.nodes[n].parent);
    EXPECT_EQ(loaded.tree.nodes[n].left, r.tree.nodes[n].left);
    EXPECT_EQ(loaded.tree.nodes[n].right, r.tree.nodes[n].right);
    EXPECT_EQ(loaded.tree.nodes[n].clause, r.tree.nodes[n].clause);
  }
  EXPECT_EQ(loaded.tree.leaves(), r.tree.leaves());
}

TEST(MixtureJson, TreelessForm) {
  const auto mix = Mixture::from_modes({MarginalField::uniform(2, 2)}, {1.5}, {true});
  const auto loaded = io::mixture_from_json(reparse(io::mixture_to_json(mix)));
  EXPECT_TRUE(loaded.tree.nodes.empty());
  EXPECT_EQ(loaded.mixture.modes[0].field, mix.modes[0].field);
  EXPECT_EQ(loaded.mixture.log_z_tilde, mix.log_z_tilde);
  EXPECT_THROW(io::mixture_from_json(json::parse(R"({"log_z_tilde": 0, "nodes": [], "leaves": []})")), InvalidInput);
}

TEST(ProblemJson, RoundTrip) {
  ModeSequenceProblem p{{{0.3, 0.7}, {1.0}, {0.2, 0.5, 0.3}}, {{0.1, 0.2}, {0.0, 1.0 / 3, 2.5}}};
  const auto j = io::problem_to_json(p);
  EXPECT_EQ(j.at("transitions")[0].size(), 2u);
  EXPECT_EQ(j.at("transitions")[1].size(), 1u);
  const auto back = io::problem_from_json(reparse(j));
  EXPECT_EQ(back.weights, p.weights);
  EXPECT_EQ(back.transitions, p.transitions);
}

TEST(ProblemJson, RejectsInconsistentShapes) {
  EXPECT_THROW(io::problem_from_json(json::parse(R"({"weights": [[0.5, 0.5], [1.0]], "transitions": []})")),
               InvalidInput);
  EXPECT_THROW(io::problem_from_json(json::parse(R"({"weights": [[0.5, 0.5], [1.0]], "transitions": [[[0, 1]]]})")),
               InvalidInput);
  EXPECT_THROW(io::problem_from_json(json::parse(R"({"weights": [[0.5, 0.6]]})")), InvalidInput);
}

TEST(Files, MissingAndUnparsable) {
  EXPECT_THROW(io::read_json_file("/nonexistent/x.json"), InvalidInput);
  const auto path = temp_path("bad.json");
  io::write_text_file(path, "{not json");
  EXPECT_THROW(io::read_json_file(path), InvalidInput);
  std::filesystem::remove(path);
  EXPECT_THROW(io::write_text_file("/nonexistent/dir/x.json", "{}"), InvalidInput);
}
