#include "rfextra/harness.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "rfextra/rng.hpp"
#include "rfextra/surrogate.hpp"
#include "rfextra/theory.hpp"

namespace rfextra {

const char* termination_name(Termination t) {
  switch (t) {
    case Termination::tolerance: return "tolerance";
    case Termination::budget: return "budget";
    case Termination::divergence: return "divergence";
  }
  return "unknown";
}

// ---------------------------------------------------------------- config

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& value) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(value, &pos);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': bad number '" + value + "'");
  }
  if (pos != value.size())
    throw ConfigError("config key '" + key + "': bad number '" + value + "'");
  return v;
}

long parse_long(const std::string& key, const std::string& value) {
  const double v = parse_double(key, value);
  if (v != std::floor(v))
    throw ConfigError("config key '" + key + "': expected an integer, got '" + value + "'");
  return static_cast<long>(v);
}

std::uint64_t parse_seed(const std::string& key, const std::string& value) {
  const long v = parse_long(key, value);
  if (v < 0) throw ConfigError("config key '" + key + "': seed must be nonnegative");
  return static_cast<std::uint64_t>(v);
}

GraphKind graph_kind_from_string(const std::string& key, const std::string& v) {
  if (v == "ring") return GraphKind::ring;
  if (v == "star") return GraphKind::star;
  if (v == "complete") return GraphKind::complete;
  if (v == "erdos_renyi") return GraphKind::erdos_renyi;
  if (v == "file") return GraphKind::file;
  throw ConfigError("config key '" + key + "': unknown graph kind '" + v + "'");
}

SolverKind solver_kind_from_string(const std::string& key, const std::string& v) {
  if (v == "rf_extra") return SolverKind::rf_extra;
  if (v == "dprgd") return SolverKind::dprgd;
  if (v == "rextra_style") return SolverKind::rextra_style;
  throw ConfigError("config key '" + key + "': unknown solver kind '" + v + "'");
}

void apply_one(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  // problem.kind / graph.kind are handled by the caller before this runs
  if (key == "problem.kind" || key == "graph.kind") return;

  if (key == "graph.p") { cfg.graph.p = parse_double(key, value); return; }
  if (key == "graph.seed") { cfg.graph.seed = parse_seed(key, value); return; }
  if (key == "graph.theta") { cfg.graph.theta = parse_double(key, value); return; }
  if (key == "graph.path") {
    if (cfg.graph.kind != GraphKind::file)
      throw ConfigError("config key 'graph.path' requires graph.kind = file");
    cfg.graph.path = value;
    return;
  }

  if (key == "solver.kind") { cfg.solver.kind = solver_kind_from_string(key, value); return; }
  if (key == "solver.beta_hat") { cfg.solver.beta_hat = parse_double(key, value); return; }
  if (key == "solver.beta_penalty") { cfg.solver.beta_penalty = parse_double(key, value); return; }
  if (key == "solver.max_iters") {
    cfg.solver.max_iters = parse_long(key, value);
    if (cfg.solver.max_iters < 1) throw ConfigError("solver.max_iters must be >= 1");
    return;
  }
  if (key == "solver.tol") {
    cfg.solver.tol = parse_double(key, value);
    if (cfg.solver.tol < 0) throw ConfigError("solver.tol must be >= 0");
    return;
  }
  if (key == "solver.init_seed") { cfg.solver.init_seed = parse_seed(key, value); return; }

  if (key == "output.csv") { cfg.output.csv = value; return; }
  if (key == "output.trace_every") {
    cfg.output.trace_every = parse_long(key, value);
    if (cfg.output.trace_every < 0) throw ConfigError("output.trace_every must be >= 0");
    return;
  }

  if (auto* p = std::get_if<PcaSyntheticConfig>(&cfg.problem)) {
    if (key == "problem.n") { p->n = static_cast<int>(parse_long(key, value)); return; }
    if (key == "problem.m") { p->m = static_cast<int>(parse_long(key, value)); return; }
    if (key == "problem.d") { p->d = static_cast<int>(parse_long(key, value)); return; }
    if (key == "problem.r") { p->r = static_cast<int>(parse_long(key, value)); return; }
    if (key == "problem.xi") { p->xi = parse_double(key, value); return; }
    if (key == "problem.seed") { p->seed = parse_seed(key, value); return; }
  } else if (auto* p = std::get_if<PcaMnistConfig>(&cfg.problem)) {
    if (key == "problem.path") { p->path = value; return; }
    if (key == "problem.n") { p->n = static_cast<int>(parse_long(key, value)); return; }
    if (key == "problem.r") { p->r = static_cast<int>(parse_long(key, value)); return; }
    if (key == "problem.seed") { p->seed = parse_seed(key, value); return; }
  } else if (auto* p = std::get_if<LrmcConfig>(&cfg.problem)) {
    if (key == "problem.n") { p->n = static_cast<int>(parse_long(key, value)); return; }
    if (key == "problem.d") { p->d = static_cast<int>(parse_long(key, value)); return; }
    if (key == "problem.r") { p->r = static_cast<int>(parse_long(key, value)); return; }
    if (key == "problem.T") { p->T = static_cast<int>(parse_long(key, value)); return; }
    if (key == "problem.noise") { p->noise = parse_double(key, value); return; }
    if (key == "problem.seed") { p->seed = parse_seed(key, value); return; }
    if (key == "problem.ridge") { p->ridge = parse_double(key, value); return; }
    if (key == "problem.mask_rate") { p->mask_rate = parse_double(key, value); return; }
  }

  throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace

ExperimentConfig parse_config_lines(
    const std::vector<std::pair<std::string, std::string>>& kvs) {
  ExperimentConfig cfg;
  // resolve the kinds first so kind-specific keys land in the right variant
  for (const auto& [key, value] : kvs) {
    if (key == "problem.kind") {
      if (value == "pca_synthetic") cfg.problem = PcaSyntheticConfig{};
      else if (value == "pca_mnist") cfg.problem = PcaMnistConfig{};
      else if (value == "lrmc") cfg.problem = LrmcConfig{};
      else throw ConfigError("config key 'problem.kind': unknown problem '" + value + "'");
    } else if (key == "graph.kind") {
      cfg.graph.kind = graph_kind_from_string(key, value);
    }
  }
  for (const auto& [key, value] : kvs) apply_one(cfg, key, value);
  return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::vector<std::pair<std::string, std::string>> kvs;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config file '" + path + "' line " + std::to_string(lineno) +
                        ": expected 'section.key = value'");
    kvs.emplace_back(trim(stripped.substr(0, eq)), trim(stripped.substr(eq + 1)));
  }
  return parse_config_lines(kvs);
}

void apply_override(ExperimentConfig& cfg, const std::string& key,
                    const std::string& value) {
  if (key == "problem.kind" || key == "graph.kind")
    throw ConfigError("override of '" + key + "' is not supported; set it in the config file");
  apply_one(cfg, key, value);
}

// ---------------------------------------------------------------- running

namespace {

std::unique_ptr<Problem> build_problem(const ExperimentConfig& cfg) {
  if (const auto* p = std::get_if<PcaSyntheticConfig>(&cfg.problem))
    return std::make_unique<PcaProblem>(
        generate_synthetic_pca(p->n, p->m, p->d, p->r, p->xi, p->seed));
  if (const auto* p = std::get_if<PcaMnistConfig>(&cfg.problem)) {
    if (p->path.empty()) throw ConfigError("problem.path is required for pca_mnist");
    return std::make_unique<PcaProblem>(load_mnist_pca(p->path, p->n, p->r, p->seed));
  }
  const auto& p = std::get<LrmcConfig>(cfg.problem);
  return std::make_unique<LrmcProblem>(generate_lrmc(
      p.n, p.d, p.r, p.T, p.noise, p.seed, p.ridge, p.mask_rate));
}

Topology build_graph(const GraphConfig& g, int n) {
  switch (g.kind) {
    case GraphKind::ring: return build_topology(TopologyKind::ring, n);
    case GraphKind::star: return build_topology(TopologyKind::star, n);
    case GraphKind::complete: return build_topology(TopologyKind::complete, n);
    case GraphKind::erdos_renyi:
      return build_topology(TopologyKind::erdos_renyi, n, g.p, g.seed);
    case GraphKind::file: {
      if (g.path.empty()) throw ConfigError("graph.path is required for graph.kind = file");
      return load_topology(g.path);
    }
  }
  throw ConfigError("unhandled graph kind");
}

std::uint64_t problem_seed(const ExperimentConfig& cfg) {
  if (const auto* p = std::get_if<PcaSyntheticConfig>(&cfg.problem)) return p->seed;
  if (const auto* p = std::get_if<PcaMnistConfig>(&cfg.problem)) return p->seed;
  return std::get<LrmcConfig>(cfg.problem).seed;
}

double default_tol(const ExperimentConfig& cfg) {
  if (std::holds_alternative<PcaSyntheticConfig>(cfg.problem)) return 1e-8;
  return 1e-6;  // MNIST and LRMC thresholds
}

long default_max_iters(const ExperimentConfig& cfg) {
  return std::holds_alternative<LrmcConfig>(cfg.problem) ? 1500 : 50000;
}

long resolve_trace_every(const ExperimentConfig& cfg) {
  if (cfg.output.trace_every > 0) return cfg.output.trace_every;
  return std::holds_alternative<PcaMnistConfig>(cfg.problem) ? 10 : 1;
}

double resolve_beta(const ExperimentConfig& cfg, const Problem& problem) {
  if (cfg.solver.beta_penalty > 0.0) return cfg.solver.beta_penalty;
  // sampled beta_floor default; heavy-tailed data can make this large, so
  // experiment configs normally pin solver.beta_penalty explicitly
  RegionSampler sampler;
  sampler.d = problem.ambient_rows();
  sampler.r = problem.rank();
  sampler.seed = 0x7e09;
  return estimate_constants(problem, sampler, 100).beta_floor;
}

struct Metrics {
  double stationarity = 0.0, consensus = 0.0, feasibility = 0.0;
  std::optional<double> dist_solution;
  double fval = 0.0, surrogate_norm = 0.0;
};

Metrics measure(const StackedState& st, const Problem& problem, double beta) {
  Metrics m;
  const Matrix xbar = average_iterate(st);
  const Matrix xpol = polar_orthonormalize(xbar);
  const LocalGradient gfn = problem.global_gradient_fn();
  m.stationarity = riemannian_gradient(gfn, xpol).norm();
  double cons2 = 0.0;
  for (const Matrix& x : st.X) cons2 += (x - xbar).squaredNorm();
  m.consensus = std::sqrt(cons2);
  m.feasibility = gram_residual(xbar).norm();
  if (const Matrix* ref = problem.reference())
    m.dist_solution = procrustes_distance(xpol, *ref);
  m.fval = problem.global_value(xpol);
  m.surrogate_norm = surrogate_H(gfn, xbar, SurrogateParams{beta}).norm();
  return m;
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& cfg) {
  const auto problem = build_problem(cfg);
  const Topology topo = build_graph(cfg.graph, problem->agents());
  if (topo.n != problem->agents())
    throw ConfigError("graph has " + std::to_string(topo.n) + " nodes but the problem has " +
                      std::to_string(problem->agents()) + " agents");
  const MixingPair mp = with_correction(metropolis_weights(topo), cfg.graph.theta);

  SolverConfig scfg;
  scfg.alpha = cfg.solver.beta_hat / problem->alpha_denominator();
  scfg.beta = resolve_beta(cfg, *problem);
  scfg.theta = cfg.graph.theta;
  scfg.max_iters =
      cfg.solver.max_iters >= 1 ? cfg.solver.max_iters : default_max_iters(cfg);
  scfg.tol = cfg.solver.tol >= 0.0 ? cfg.solver.tol : default_tol(cfg);
  const long trace_every = resolve_trace_every(cfg);

  const std::uint64_t init_seed =
      cfg.solver.init_seed ? *cfg.solver.init_seed
                           : mix_seed(problem_seed(cfg), 0xA11CEULL);
  const auto x0 = replicated_orthonormal_init(*problem, init_seed);

  using StepFn = void (*)(StackedState&, const Problem&, const MixingPair&,
                          const SolverConfig&);
  StackedState st;
  StepFn step = nullptr;
  switch (cfg.solver.kind) {
    case SolverKind::rf_extra:
      st = rf_extra_init(*problem, mp, scfg, x0);
      step = &rf_extra_step;
      break;
    case SolverKind::dprgd:
      st = dprgd_init(*problem, mp, scfg, x0);
      step = &dprgd_step;
      break;
    case SolverKind::rextra_style:
      st = rextra_style_init(*problem, mp, scfg, x0);
      step = &rextra_style_step;
      break;
  }

  RunResult res;
  res.resolved_alpha = scfg.alpha;
  res.resolved_beta = scfg.beta;
  const auto t0 = std::chrono::steady_clock::now();
  const auto elapsed_ms = [&t0] {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now() - t0)
        .count();
  };

  for (;;) {
    Metrics m;
    try {
      m = measure(st, *problem, scfg.beta);
    } catch (const std::exception& e) {
      res.termination = Termination::divergence;
      res.divergence_message = e.what();
      break;
    }
    const bool due = (st.iter % trace_every == 0);
    const bool stop_tol = scfg.tol > 0.0 && m.stationarity < scfg.tol;
    const bool stop_budget = st.iter >= scfg.max_iters;
    if (due || stop_tol || stop_budget) {
      TraceRecord rec;
      rec.iter = st.iter;
      rec.comm_rounds = st.comm_rounds;
      rec.gradient_evals = st.gradient_evals;
      rec.stationarity = m.stationarity;
      rec.consensus = m.consensus;
      rec.feasibility = m.feasibility;
      rec.dist_solution = m.dist_solution;
      rec.fval = m.fval;
      rec.surrogate_norm = m.surrogate_norm;
      rec.wall_ms = elapsed_ms();
      if (!res.trace.empty() && res.trace.back().iter == rec.iter)
        res.trace.back() = rec;  // final iterate coincides with a due record
      else
        res.trace.push_back(rec);
    }
    res.final_stationarity = m.stationarity;
    res.final_consensus = m.consensus;
    res.final_feasibility = m.feasibility;
    res.final_dist_solution = m.dist_solution;
    if (stop_tol) {
      res.termination = Termination::tolerance;
      break;
    }
    if (stop_budget) {
      res.termination = Termination::budget;
      break;
    }
    try {
      step(st, *problem, mp, scfg);
    } catch (const DivergenceError& e) {
      res.termination = Termination::divergence;
      res.divergence_message = e.what();
      break;
    }
  }
  res.iterations = st.iter;

  if (!cfg.output.csv.empty()) emit_csv(res.trace, cfg.output.csv);
  return res;
}

// ---------------------------------------------------------------- csv

namespace {

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void emit_csv(const std::vector<TraceRecord>& trace, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("emit_csv: cannot open '" + path + "'");
  out << "iter,comm_rounds,gradient_evals,stationarity,consensus,feasibility,"
         "dist_solution,fval,surrogate_norm,wall_ms\n";
  for (const TraceRecord& r : trace) {
    out << r.iter << ',' << r.comm_rounds << ',' << r.gradient_evals << ','
        << fmt17(r.stationarity) << ',' << fmt17(r.consensus) << ','
        << fmt17(r.feasibility) << ','
        << (r.dist_solution ? fmt17(*r.dist_solution) : std::string()) << ','
        << fmt17(r.fval) << ',' << fmt17(r.surrogate_norm) << ','
        << fmt17(r.wall_ms) << '\n';
  }
  out.flush();
  if (!out) throw std::runtime_error("emit_csv: write failed for '" + path + "'");
}

// ---------------------------------------------------------------- grid search

namespace {

// 0 = reached tol, 1 = exhausted budget, 2 = diverged
int rank_category(const GridPointSummary& s) {
  if (s.termination == Termination::divergence) return 2;
  return s.reached ? 0 : 1;
}

bool better(const GridPointSummary& a, const GridPointSummary& b) {
  const int ca = rank_category(a), cb = rank_category(b);
  if (ca != cb) return ca < cb;
  if (ca == 0 && a.iterations != b.iterations) return a.iterations < b.iterations;
  if (a.final_stationarity != b.final_stationarity)
    return a.final_stationarity < b.final_stationarity;
  return a.beta_hat < b.beta_hat;
}

}  // namespace

GridSearchResult grid_search(const ExperimentConfig& cfg_template,
                             const std::vector<double>& beta_hat_grid,
                             int jobs) {
  if (beta_hat_grid.empty())
    throw std::invalid_argument("grid_search: empty beta_hat grid");
  GridSearchResult res;
  res.points.resize(beta_hat_grid.size());

  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t idx = next.fetch_add(1);
      if (idx >= beta_hat_grid.size()) return;
      ExperimentConfig cfg = cfg_template;
      cfg.solver.beta_hat = beta_hat_grid[idx];
      cfg.output.csv.clear();
      GridPointSummary& s = res.points[idx];
      s.beta_hat = beta_hat_grid[idx];
      try {
        const RunResult r = run_experiment(cfg);
        s.termination = r.termination;
        s.reached = r.termination == Termination::tolerance;
        s.iterations = r.iterations;
        s.final_stationarity =
            r.trace.empty() ? std::numeric_limits<double>::infinity()
                            : r.final_stationarity;
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };

  const int nthreads = std::max(1, std::min<int>(jobs, static_cast<int>(beta_hat_grid.size())));
  if (nthreads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(nthreads);
    for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  std::size_t best = 0;
  bool any_usable = false;
  for (std::size_t i = 0; i < res.points.size(); ++i) {
    if (rank_category(res.points[i]) < 2) any_usable = true;
    if (better(res.points[i], res.points[best])) best = i;
  }
  if (any_usable) res.best = best;
  return res;
}

std::vector<double> default_beta_hat_grid(const ExperimentConfig& cfg) {
  std::vector<double> grid;
  if (std::holds_alternative<LrmcConfig>(cfg.problem)) {
    for (double scale : {1e-5, 1e-4, 1e-3})
      for (double base : {1.25, 2.5, 6.25, 10.0}) grid.push_back(base * scale);
  } else if (std::holds_alternative<PcaMnistConfig>(cfg.problem)) {
    for (double scale : {1e-4, 1e-3, 1e-2})
      for (double base : {1.0, 2.0, 6.0}) grid.push_back(base * scale);
  } else {
    for (double scale : {1e-5, 1e-4, 1e-3, 1e-2})
      for (double base : {1.0, 2.0, 4.0, 6.0, 8.0}) grid.push_back(base * scale);
  }
  return grid;
}

}  // namespace rfextra
