#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mmmf/cardinality.hpp"
#include "mmmf/error.hpp"
#include "mmmf/mixture.hpp"
#include "mmmf/model.hpp"
#include "mmmf/temporal.hpp"

// Doubles are written in shortest round-trip form, so every load of a saved
// document reproduces the values bit for bit.

namespace mmmf::io {

using json = nlohmann::json;

namespace detail {

inline json matrix(std::span<const double> flat, int rows, int cols) {
  json m = json::array();
  for (int r = 0; r < rows; ++r) {
    json row = json::array();
    for (int c = 0; c < cols; ++c) row.push_back(flat[static_cast<std::size_t>(r) * cols + c]);
    m.push_back(std::move(row));
  }
  return m;
}

inline std::vector<double> flatten(const json& m, int rows, int cols, const std::string& what) {
  mmmf::detail::require(m.is_array() && static_cast<int>(m.size()) == rows, what + ": wrong number of rows");
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(rows) * cols);
  for (const auto& row : m) {
    mmmf::detail::require(row.is_array() && static_cast<int>(row.size()) == cols, what + ": wrong number of columns");
    for (const auto& v : row) {
      mmmf::detail::require(v.is_number(), what + ": non-numeric entry");
      out.push_back(v.get<double>());
    }
  }
  return out;
}

template <typename T>
T field(const json& j, const char* key) {
  mmmf::detail::require(j.is_object() && j.contains(key), std::string("missing field \"") + key + "\"");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw InvalidInput(std::string("field \"") + key + "\" has the wrong type");
  }
}

}  // namespace detail

inline json graph_to_json(const FactorGraph& g) {
  json j;
  j["num_vars"] = g.num_vars();
  j["num_labels"] = g.num_labels();
  j["unaries"] = detail::matrix(g.unaries(), g.num_vars(), g.num_labels());
  json edges = json::array();
  for (const auto& e : g.edges())
    edges.push_back({{"i", e.i}, {"j", e.j}, {"w", detail::matrix(e.w, g.num_labels(), g.num_labels())}});
  j["edges"] = std::move(edges);
  return j;
}

inline FactorGraph graph_from_json(const json& j) {
  const int n = detail::field<int>(j, "num_vars");
  const int nl = detail::field<int>(j, "num_labels");
  mmmf::detail::require(n >= 1 && nl >= 2, "graph: bad dimensions");
  auto unaries = detail::flatten(j.at("unaries"), n, nl, "unaries");
  std::vector<Edge> edges;
  const auto& je = j.contains("edges") ? j.at("edges") : json::array();
  mmmf::detail::require(je.is_array(), "graph: edges must be an array");
  for (const auto& e : je)
    edges.push_back({detail::field<int>(e, "i"), detail::field<int>(e, "j"), detail::flatten(e.at("w"), nl, nl, "edge w")});
  return FactorGraph(n, nl, std::move(unaries), std::move(edges));
}

inline json field_to_json(const MarginalField& q) { return detail::matrix(q.table(), q.num_vars(), q.num_labels()); }

inline MarginalField field_from_json(const json& j) {
  mmmf::detail::require(j.is_array() && !j.empty() && j[0].is_array(), "marginals: expected a non-empty matrix");
  const int n = static_cast<int>(j.size()), nl = static_cast<int>(j[0].size());
  MarginalField q(n, nl, detail::flatten(j, n, nl, "marginals"));
  q.validate();
  return q;
}

inline json clause_to_json(const CardinalityClause& c) {
  json members = json::array();
  for (const auto& m : c.members) members.push_back({m.var, m.label});
  return {{"members", std::move(members)}, {"C", c.threshold}, {"dir", to_string(c.direction)}, {"eps", c.epsilon}};
}

inline CardinalityClause clause_from_json(const json& j) {
  CardinalityClause c;
  for (const auto& m : j.at("members")) {
    mmmf::detail::require(m.is_array() && m.size() == 2, "clause: members must be [var, label] pairs");
    c.members.push_back({m[0].get<int>(), m[1].get<int>()});
  }
  c.threshold = detail::field<int>(j, "C");
  const auto dir = detail::field<std::string>(j, "dir");
  mmmf::detail::require(dir == "at_least" || dir == "less_than", "clause: dir must be at_least or less_than");
  c.direction = dir == "at_least" ? Direction::at_least : Direction::less_than;
  c.epsilon = detail::field<double>(j, "eps");
  c.validate();
  return c;
}

/// Tree and mixture in one document: nodes in breadth-first order, leaves in
/// the same order as the mixture's modes.
inline json mixture_to_json(const ModeTree& tree, const Mixture& mix) {
  json nodes = json::array();
  for (const auto& n : tree.nodes) {
    json jn = {{"parent", n.parent}, {"left", n.left}, {"right", n.right}};
    jn["clause"] = n.clause ? clause_to_json(*n.clause) : json(nullptr);
    nodes.push_back(std::move(jn));
  }
  const auto leaf_ids = tree.leaves();
  mmmf::detail::require(leaf_ids.size() == mix.modes.size(), "mixture_to_json: tree and mixture disagree");
  json leaves = json::array();
  for (std::size_t k = 0; k < mix.modes.size(); ++k) {
    const auto& m = mix.modes[k];
    leaves.push_back({{"node", leaf_ids[k]},
                      {"A", m.free_energy},
                      {"m", m.weight},
                      {"feasible", m.feasible},
                      {"marginals", field_to_json(m.field)}});
  }
  return {{"log_z_tilde", mix.log_z_tilde}, {"nodes", std::move(nodes)}, {"leaves", std::move(leaves)}};
}

// Mixture without a tree; leaves carry node = -1.
inline json mixture_to_json(const Mixture& mix) {
  json leaves = json::array();
  for (const auto& m : mix.modes)
    leaves.push_back(
        {{"node", -1}, {"A", m.free_energy}, {"m", m.weight}, {"feasible", m.feasible}, {"marginals", field_to_json(m.field)}});
  return {{"log_z_tilde", mix.log_z_tilde}, {"nodes", json::array()}, {"leaves", std::move(leaves)}};
}

struct LoadedMixture {
  ModeTree tree;
  Mixture mixture;
};

inline LoadedMixture mixture_from_json(const json& j) {
  LoadedMixture out;
  for (const auto& jn : j.at("nodes")) {
    ModeNode n;
    n.parent = detail::field<int>(jn, "parent");
    n.left = detail::field<int>(jn, "left");
    n.right = detail::field<int>(jn, "right");
    if (jn.contains("clause") && !jn.at("clause").is_null()) n.clause = clause_from_json(jn.at("clause"));
    out.tree.nodes.push_back(std::move(n));
  }
  out.mixture.log_z_tilde = detail::field<double>(j, "log_z_tilde");
  for (const auto& jl : j.at("leaves")) {
    Mode m;
    m.free_energy = detail::field<double>(jl, "A");
    m.weight = detail::field<double>(jl, "m");
    m.feasible = detail::field<bool>(jl, "feasible");
    m.field = field_from_json(jl.at("marginals"));
    const int node = jl.contains("node") ? jl.at("node").get<int>() : -1;
    if (node >= 0 && node < static_cast<int>(out.tree.nodes.size())) {
      auto& n = out.tree.nodes[node];
      n.field = m.field;
      n.free_energy = m.free_energy;
      n.feasible = m.feasible;
    }
    out.mixture.modes.push_back(std::move(m));
  }
  mmmf::detail::require(!out.mixture.modes.empty(), "mixture: no leaves");
  return out;
}

inline json problem_to_json(const ModeSequenceProblem& p) {
  json j;
  j["weights"] = p.weights;
  json tr = json::array();
  for (std::size_t t = 0; t < p.transitions.size(); ++t) {
    const int rows = static_cast<int>(p.weights[t].size()), cols = static_cast<int>(p.weights[t + 1].size());
    tr.push_back(detail::matrix(p.transitions[t], rows, cols));
  }
  j["transitions"] = std::move(tr);
  return j;
}

inline ModeSequenceProblem problem_from_json(const json& j) {
  ModeSequenceProblem p;
  p.weights = detail::field<std::vector<std::vector<double>>>(j, "weights");
  const auto& tr = j.contains("transitions") ? j.at("transitions") : json::array();
  mmmf::detail::require(tr.is_array() && tr.size() + 1 == p.weights.size(),
                        "temporal problem: need one transition matrix per consecutive pair of steps");
  for (std::size_t t = 0; t < tr.size(); ++t)
    p.transitions.push_back(detail::flatten(tr[t], static_cast<int>(p.weights[t].size()),
                                            static_cast<int>(p.weights[t + 1].size()), "transitions"));
  p.validate();
  return p;
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw InvalidInput(path + ": " + e.what());
  }
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write " + path);
  out << text;
  if (!out) throw InvalidInput("write failed: " + path);
}

inline FactorGraph load_graph(const std::string& path) { return graph_from_json(read_json_file(path)); }

inline void save_graph(const std::string& path, const FactorGraph& g) { write_text_file(path, graph_to_json(g).dump() + "\n"); }

}  // namespace mmmf::io
