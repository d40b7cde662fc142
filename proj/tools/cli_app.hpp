#pragma once

#include <algorithm>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mmmf/mmmf.hpp"

namespace mmmf::cli {

using io::json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitSolver = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SolverFlags {
  std::uint64_t seed = 0;
  double damping = 0.5;
  double tol = 1e-6;
  int max_sweeps = 500;

  SolverConfig config() const {
    SolverConfig c;
    c.damping = damping;
    c.tol = tol;
    c.max_sweeps = max_sweeps;
    return c;
  }
};

struct BuildFlags {
  double epsilon = 1e-4;
  double h_low = kDefaultHLow;
  double h_high = kDefaultHHigh;
  double t_max = 8.0;
  int t_steps = 8;
  std::string threshold = "all";
  std::string rule = "group";
  std::string seed_policy = "max_gap";
  int group_size = 0;
  int radius = -1;

  BuildConfig config(const SolverFlags& s) const {
    BuildConfig c;
    c.solver = s.config();
    c.epsilon = epsilon;
    c.selection.h_low = h_low;
    c.selection.h_high = h_high;
    c.selection.radius = radius;
    c.selection.max_members = group_size;
    c.schedule = TemperatureSchedule::geometric(t_max, t_steps);
    c.seed = s.seed;
    c.threshold = threshold == "one" ? ThresholdPolicy::one : threshold == "half" ? ThresholdPolicy::half : ThresholdPolicy::all;
    c.rule = rule == "single_maxw" ? SplitRule::single_maxw
             : rule == "single_entropy" ? SplitRule::single_entropy
                                        : SplitRule::group;
    c.selection.seed_policy = seed_policy == "maxw" ? SeedPolicy::maxw
                              : seed_policy == "random" ? SeedPolicy::random
                                                        : SeedPolicy::max_gap;
    return c;
  }
};

inline void add_solver_flags(CLI::App* sub, SolverFlags& f) {
  sub->add_option("--seed", f.seed, "RNG seed");
  sub->add_option("--damping", f.damping, "weight kept from the previous iterate, in [0,1)");
  sub->add_option("--tol", f.tol, "max-norm convergence threshold");
  sub->add_option("--max-sweeps", f.max_sweeps, "sweep budget per solve");
}

inline void add_build_flags(CLI::App* sub, BuildFlags& f, bool with_group_size = true) {
  sub->add_option("--epsilon", f.epsilon, "clause slack");
  sub->add_option("--h-low", f.h_low, "entropy below which a variable counts as confident at T=1");
  sub->add_option("--h-high", f.h_high, "entropy above which a variable counts as uncertain at T");
  sub->add_option("--t-max", f.t_max, "largest sweep temperature");
  sub->add_option("--t-steps", f.t_steps, "geometric sweep steps up to t-max");
  sub->add_option("--threshold", f.threshold, "clause threshold policy")->check(CLI::IsMember({"all", "one", "half"}));
  sub->add_option("--rule", f.rule, "split rule")->check(CLI::IsMember({"group", "single_maxw", "single_entropy"}));
  sub->add_option("--seed-policy", f.seed_policy, "group seeding")->check(CLI::IsMember({"max_gap", "maxw", "random"}));
  if (with_group_size) sub->add_option("--group-size", f.group_size, "cap on clause size (0 = no cap)");
  sub->add_option("--radius", f.radius, "graph-distance limit around the group seed (-1 = none)");
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

inline std::vector<int> parse_int_list(const std::string& s, const std::string& what) {
  std::vector<int> out;
  for (const auto& item : split_list(s)) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError(what + ": not an integer: " + item);
    }
  }
  if (out.empty()) throw UsageError(what + ": empty list");
  return out;
}

inline void emit(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty() || path == "-")
    out << text;
  else
    io::write_text_file(path, text);
}

// Config file keys become flags placed before the user's own, so that flags
// given on the command line win (options keep their last value).
inline std::vector<std::string> config_arguments(const std::vector<std::string>& args) {
  std::string path;
  for (std::size_t k = 0; k < args.size(); ++k) {
    if (args[k] == "--config" && k + 1 < args.size()) path = args[k + 1];
    if (args[k].rfind("--config=", 0) == 0) path = args[k].substr(9);
  }
  if (path.empty()) return {};
  json cfg;
  try {
    cfg = io::read_json_file(path);
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  if (!cfg.is_object()) throw UsageError("config: expected a JSON object");
  std::vector<std::string> out;
  for (const auto& [key, value] : cfg.items()) {
    std::string flag = "--" + key;
    std::replace(flag.begin(), flag.end(), '_', '-');
    if (flag == "--config") throw UsageError("config: nested config is not allowed");
    if (value.is_boolean()) {
      if (value.get<bool>()) out.push_back(flag);
    } else if (value.is_string()) {
      out.push_back(flag);
      out.push_back(value.get<std::string>());
    } else if (value.is_number()) {
      out.push_back(flag);
      out.push_back(value.dump());
    } else if (value.is_array()) {
      std::string joined;
      for (const auto& v : value) joined += (joined.empty() ? "" : ",") + (v.is_string() ? v.get<std::string>() : v.dump());
      out.push_back(flag);
      out.push_back(joined);
    } else {
      throw UsageError("config: unsupported value for " + key);
    }
  }
  return out;
}

inline int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-modal mean-field inference for discrete CRFs", "mmmf"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  app.footer("Every verb accepts --config FILE: a JSON object of flag values (keys as flag names,\n"
             "'-' or '_'); flags on the command line override it.");

  SolverFlags solver;
  BuildFlags build;
  std::string output;

  // gen
  auto* gen = app.add_subcommand("gen", "write a random or constructed CRF as JSON");
  std::string gen_kind = "crf", topology = "grid", coupling = "mixed";
  int side = 0;
  double pairwise_hi = 6.0, unary_hi = 2.0, strong_w = 4.0, weak_w = 0.5, bias = 2.0;
  DenseGaussianSpec dense;
  bool open_boundary = false;
  gen->add_option("--kind", gen_kind, "crf | toy | dense")->check(CLI::IsMember({"crf", "toy", "dense"}));
  gen->add_option("--topology", topology)->check(CLI::IsMember({"grid", "random"}));
  gen->add_option("--coupling", coupling)->check(CLI::IsMember({"attractive", "mixed"}));
  gen->add_option("--side", side, "grid side (default 4 for crf, 16 otherwise)");
  gen->add_option("--pairwise-hi", pairwise_hi);
  gen->add_option("--unary-hi", unary_hi);
  gen->add_option("--strong-w", strong_w);
  gen->add_option("--weak-w", weak_w);
  gen->add_option("--bias", bias);
  gen->add_option("--gamma", dense.gamma);
  gen->add_option("--sigma", dense.sigma);
  gen->add_option("--theta-rgb", dense.theta_rgb);
  gen->add_option("--unary-bias", dense.unary_bias);
  gen->add_option("--truncation", dense.truncation);
  gen->add_flag("--open-boundary", open_boundary, "no wrap-around for dense kernels");
  gen->add_option("--seed", solver.seed);
  gen->add_option("-o,--output", output);

  // mf
  auto* mf = app.add_subcommand("mf", "unconstrained mean field; prints A and marginals");
  std::string graph_path, init_kind = "noisy";
  mf->add_option("--graph", graph_path)->required();
  mf->add_option("--init", init_kind, "noisy | uniform")->check(CLI::IsMember({"noisy", "uniform"}));
  add_solver_flags(mf, solver);
  mf->add_option("-o,--output", output);

  // mmmf
  auto* mm = app.add_subcommand("mmmf", "build a mode tree and write the mixture as JSON");
  int modes = 2;
  mm->add_option("--graph", graph_path)->required();
  mm->add_option("--modes", modes, "target number of modes K");
  add_solver_flags(mm, solver);
  add_build_flags(mm, build);
  mm->add_option("-o,--output", output);

  // bench
  auto* bench = app.add_subcommand("bench", "benchmark on random CRFs; writes CSV");
  int trials = 100, jobs = 1, group_size = 3;
  std::string methods = "mmmf_ours_m,mmmf_ours_r,base_maxw,entropy_single", k_list = "1,2,3,4";
  std::string sides = "4";
  bool timing = false;
  bench->add_option("--topology", topology)->check(CLI::IsMember({"grid", "random"}));
  bench->add_option("--coupling", coupling)->check(CLI::IsMember({"attractive", "mixed"}));
  bench->add_option("--side", sides, "grid side, or a comma list");
  bench->add_option("--pairwise-hi", pairwise_hi);
  bench->add_option("--unary-hi", unary_hi);
  bench->add_option("--trials", trials, "instances per side");
  bench->add_option("--methods", methods, "comma list of methods");
  bench->add_option("--k-list", k_list, "comma list of mode counts");
  bench->add_option("--jobs", jobs, "worker threads");
  bench->add_flag("--timing", timing, "fill the wall_ms column");
  add_solver_flags(bench, solver);
  add_build_flags(bench, build, false);
  bench->add_option("--group-size", group_size, "members per clause for the group methods");
  bench->add_option("-o,--output", output);

  // tc-scan
  auto* tc = app.add_subcommand("tc-scan", "entropy statistics along a temperature sweep (CSV)");
  double t_min = 1.0, t_hi = 10.0;
  int steps = 91;
  std::string tc_init = "polarized";
  dense.grid_side = 16;
  tc->add_option("--graph", graph_path, "CRF file; default is a dense Gaussian grid");
  tc->add_option("--grid-side", dense.grid_side);
  tc->add_option("--gamma", dense.gamma);
  tc->add_option("--sigma", dense.sigma);
  tc->add_option("--theta-rgb", dense.theta_rgb);
  tc->add_option("--unary-bias", dense.unary_bias);
  tc->add_option("--truncation", dense.truncation);
  tc->add_flag("--open-boundary", open_boundary);
  tc->add_option("--t-min", t_min);
  tc->add_option("--t-max", t_hi);
  tc->add_option("--steps", steps);
  tc->add_option("--init", tc_init, "polarized | noisy")->check(CLI::IsMember({"polarized", "noisy"}));
  add_solver_flags(tc, solver);
  tc->add_option("-o,--output", output);

  // temporal
  auto* tp = app.add_subcommand("temporal", "pick one mode per step by dynamic programming");
  std::string problem_path, mixture_list;
  double transition_weight = 1.0;
  tp->add_option("--problem", problem_path, "problem JSON");
  tp->add_option("--mixtures", mixture_list, "comma list of mixture files (MAP-disagreement transitions)");
  tp->add_option("--transition-weight", transition_weight);
  tp->add_option("-o,--output", output);

  // oracle
  auto* orc = app.add_subcommand("oracle", "exact log Z, marginals and mixture KL by enumeration");
  std::string mixture_path;
  std::uint64_t cap = kDefaultEnumerationCap;
  orc->add_option("--graph", graph_path)->required();
  orc->add_option("--mixture", mixture_path);
  orc->add_option("--cap", cap, "enumeration cap in states");
  orc->add_option("-o,--output", output);

  try {
    std::vector<std::string> full;
    if (!args.empty()) {
      full.push_back(args.front());
      auto extra = config_arguments(args);
      full.insert(full.end(), extra.begin(), extra.end());
      for (std::size_t k = 1; k < args.size(); ++k) {
        if (args[k] == "--config") {
          ++k;
          continue;
        }
        if (args[k].rfind("--config=", 0) == 0) continue;
        full.push_back(args[k]);
      }
    }
    std::reverse(full.begin(), full.end());
    app.parse(full);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (gen->parsed()) {
      FactorGraph g;
      if (gen_kind == "crf") {
        GenSpec s;
        s.topology = topology == "random" ? Topology::random : Topology::grid;
        s.coupling = coupling == "attractive" ? Coupling::attractive : Coupling::mixed;
        s.side = side > 0 ? side : 4;
        s.pairwise_hi = pairwise_hi;
        s.unary_hi = unary_hi;
        s.seed = solver.seed;
        g = gen_crf(s);
      } else if (gen_kind == "toy") {
        g = gen_toy_grid({side > 0 ? side : 16, strong_w, weak_w, bias, solver.seed});
      } else {
        dense.grid_side = side > 0 ? side : 16;
        dense.periodic = !open_boundary;
        g = expand_dense_gaussian(dense);
      }
      emit(output, io::graph_to_json(g).dump() + "\n", out);
    } else if (mf->parsed()) {
      const auto g = io::load_graph(graph_path);
      const auto init = init_kind == "uniform" ? MarginalField::uniform(g.num_vars(), g.num_labels())
                                               : noisy_uniform(g.num_vars(), g.num_labels(), solver.seed);
      const auto r = mf_solve(g, init, solver.config());
      if (!r.converged) err << "warning: not converged after " << r.sweeps << " sweeps\n";
      json j = {{"free_energy", r.free_energy},
                {"converged", r.converged},
                {"sweeps", r.sweeps},
                {"marginals", io::field_to_json(r.field)}};
      emit(output, j.dump() + "\n", out);
    } else if (mm->parsed()) {
      if (modes < 1) throw UsageError("--modes must be >= 1");
      const auto g = io::load_graph(graph_path);
      ModeTreeBuilder b(g, build.config(solver));
      const int got = b.grow_to(modes);
      if (got < modes) err << "note: stopped at " << got << " modes; no leaf could split further\n";
      const auto mix = b.mixture();
      for (int k = 0; k < mix.size(); ++k)
        if (!mix.modes[k].feasible) err << "warning: mode " << k << " ended infeasible\n";
      emit(output, io::mixture_to_json(b.tree(), mix).dump() + "\n", out);
    } else if (bench->parsed()) {
      BenchOptions opt;
      opt.specs.clear();
      for (int s : parse_int_list(sides, "--side")) {
        GenSpec spec;
        spec.topology = topology == "random" ? Topology::random : Topology::grid;
        spec.coupling = coupling == "attractive" ? Coupling::attractive : Coupling::mixed;
        spec.side = s;
        spec.pairwise_hi = pairwise_hi;
        spec.unary_hi = unary_hi;
        opt.specs.push_back(spec);
      }
      opt.trials = trials;
      opt.methods.clear();
      for (const auto& name : split_list(methods)) {
        auto m = parse_method(name);
        if (!m) throw UsageError("unknown method: " + name);
        opt.methods.push_back(*m);
      }
      opt.k_list = parse_int_list(k_list, "--k-list");
      opt.seed = solver.seed;
      opt.jobs = jobs;
      opt.group_size = group_size;
      opt.build = build.config(solver);
      opt.timing = timing;
      const auto res = run_benchmark(opt);
      for (const auto& f : res.failures) err << "failure: " << f << "\n";
      for (const auto& x : res.exceptions) err << "exception: " << x << "\n";
      std::ostringstream csv;
      write_bench_csv(csv, res);
      emit(output, csv.str(), out);
    } else if (tc->parsed()) {
      if (steps < 2 || !(t_min > 0.0) || !(t_hi > t_min)) throw UsageError("tc-scan: need 0 < t-min < t-max and steps >= 2");
      FactorGraph g;
      if (graph_path.empty()) {
        dense.periodic = !open_boundary;
        g = expand_dense_gaussian(dense);
      } else {
        g = io::load_graph(graph_path);
      }
      std::vector<double> temps;
      for (int k = 0; k < steps; ++k) temps.push_back(t_min + (t_hi - t_min) * k / (steps - 1));
      const auto init = tc_init == "polarized" ? polarized_field(g.num_vars(), g.num_labels(), 0.9)
                                               : noisy_uniform(g.num_vars(), g.num_labels(), solver.seed);
      const auto rows = tc_scan(g, temps, init, solver.config());
      std::ostringstream csv;
      csv << "T,mean_entropy,min_entropy,max_entropy,p90_entropy\n";
      for (const auto& r : rows)
        csv << format_double(r.temperature) << ',' << format_double(r.mean) << ',' << format_double(r.min) << ','
            << format_double(r.max) << ',' << format_double(r.p90) << '\n';
      emit(output, csv.str(), out);
      if (auto t = transition_temperature(rows)) err << "transition_T " << format_double(*t) << "\n";
      if (graph_path.empty()) err << "critical_temperature " << format_double(critical_temperature(dense)) << "\n";
    } else if (tp->parsed()) {
      ModeSequenceProblem p;
      if (!problem_path.empty()) {
        p = io::problem_from_json(io::read_json_file(problem_path));
      } else if (!mixture_list.empty()) {
        std::vector<Mixture> seq;
        for (const auto& path : split_list(mixture_list)) seq.push_back(io::mixture_from_json(io::read_json_file(path)).mixture);
        for (const auto& m : seq) {
          std::vector<double> w;
          for (const auto& mode : m.modes) w.push_back(mode.weight);
          p.weights.push_back(std::move(w));
        }
        p.transitions = map_disagreement_transitions(seq, transition_weight);
      } else {
        throw UsageError("temporal: give --problem or --mixtures");
      }
      const auto s = best_mode_sequence(p);
      if (s.clamped_weights > 0) err << "note: " << s.clamped_weights << " weights clamped away from 0/1\n";
      json j = {{"modes", s.modes}, {"cost", s.cost}, {"clamped_weights", s.clamped_weights}};
      emit(output, j.dump() + "\n", out);
    } else if (orc->parsed()) {
      const auto g = io::load_graph(graph_path);
      json j;
      j["log_z"] = exact_log_z(g, cap);
      j["marginals"] = io::field_to_json(exact_marginals(g, cap));
      if (!mixture_path.empty()) {
        const auto mix = io::mixture_from_json(io::read_json_file(mixture_path)).mixture;
        j["log_z_tilde"] = mix.log_z_tilde;
        j["kl"] = mixture_kl_exact(g, mix, cap);
        j["kl_gap"] = j["log_z"].get<double>() - mix.log_z_tilde;
      }
      emit(output, j.dump() + "\n", out);
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitSolver;
  }
  return kExitOk;
}

}  // namespace mmmf::cli
