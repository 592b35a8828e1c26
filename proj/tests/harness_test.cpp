#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "rfextra/harness.hpp"
#include "rfextra/problems.hpp"

using namespace rfextra;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / name;
}

void write_file(const std::filesystem::path& path, const std::string& body) {
  std::ofstream out(path);
  out << body;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

// drops the trailing wall_ms column
std::string strip_wall(const std::string& line) {
  const auto pos = line.rfind(',');
  return line.substr(0, pos);
}

ExperimentConfig small_pca_config() {
  ExperimentConfig cfg;
  PcaSyntheticConfig p;
  p.n = 4;
  p.m = 50;
  p.d = 8;
  p.r = 3;
  p.seed = 5;
  cfg.problem = p;
  cfg.graph.kind = GraphKind::erdos_renyi;
  cfg.graph.p = 0.8;
  cfg.graph.seed = 3;
  cfg.solver.beta_hat = 0.08 * 50.0 / 1000.0;  // alpha 8e-5 at the small scale
  cfg.solver.beta_penalty = 10.0;
  cfg.solver.max_iters = 200;
  cfg.solver.tol = 0.0;
  return cfg;
}

}  // namespace

TEST_CASE("config files parse, apply overrides, and reject unknown keys") {
  const auto path = temp_file("rfextra_cfg_test.cfg");
  write_file(path,
             "# comment\n"
             "problem.kind = pca_synthetic\n"
             "problem.n = 4\n"
             "problem.m = 50\n"
             "problem.d = 8\n"
             "problem.r = 3\n"
             "problem.xi = 0.8\n"
             "problem.seed = 5\n"
             "graph.kind = erdos_renyi\n"
             "graph.p = 0.7   # inline comment\n"
             "graph.theta = 0.25\n"
             "solver.kind = rf_extra\n"
             "solver.beta_hat = 0.004\n"
             "solver.beta_penalty = 10\n"
             "solver.max_iters = 100\n"
             "solver.tol = 0\n"
             "output.trace_every = 5\n");
  ExperimentConfig cfg = parse_config_file(path.string());
  const auto& p = std::get<PcaSyntheticConfig>(cfg.problem);
  CHECK(p.n == 4);
  CHECK(p.d == 8);
  CHECK(cfg.graph.theta == doctest::Approx(0.25));
  CHECK(cfg.solver.beta_hat == doctest::Approx(0.004));
  CHECK(cfg.output.trace_every == 5);

  apply_override(cfg, "solver.max_iters", "50");
  CHECK(cfg.solver.max_iters == 50);
  CHECK_THROWS_AS(apply_override(cfg, "solver.bogus", "1"), ConfigError);
  CHECK_THROWS_AS(apply_override(cfg, "problem.T", "10"), ConfigError);  // lrmc-only
  CHECK_THROWS_AS(apply_override(cfg, "solver.tol", "x"), ConfigError);
  std::filesystem::remove(path);
}

TEST_CASE("config errors name the offending key or line") {
  const auto path = temp_file("rfextra_cfg_bad.cfg");
  write_file(path, "problem.kind = pca_synthetic\nproblem.bogus_key = 3\n");
  try {
    parse_config_file(path.string());
    CHECK(false);
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("problem.bogus_key") != std::string::npos);
  }
  write_file(path, "problem.kind pca_synthetic\n");
  CHECK_THROWS_AS(parse_config_file(path.string()), ConfigError);
  CHECK_THROWS_AS(parse_config_file("/nonexistent/rfextra.cfg"), ConfigError);
  std::filesystem::remove(path);
}

TEST_CASE("budget termination records exactly the requested iterations") {
  ExperimentConfig cfg = small_pca_config();
  cfg.solver.max_iters = 10;
  const RunResult r = run_experiment(cfg);
  CHECK(r.termination == Termination::budget);
  CHECK(r.iterations == 10);
  REQUIRE(r.trace.size() == 11);  // every iterate plus no duplicate final row
  for (int k = 0; k <= 10; ++k) CHECK(r.trace[k].iter == k);
}

TEST_CASE("epoch accounting: gradient evaluations equal n times the iteration") {
  for (SolverKind kind :
       {SolverKind::rf_extra, SolverKind::dprgd, SolverKind::rextra_style}) {
    ExperimentConfig cfg = small_pca_config();
    cfg.solver.kind = kind;
    cfg.solver.max_iters = 20;
    const RunResult r = run_experiment(cfg);
    for (const TraceRecord& rec : r.trace) {
      CHECK(rec.gradient_evals == 4 * rec.iter);
      CHECK(rec.comm_rounds == rec.iter);
    }
  }
}

TEST_CASE("tolerance termination leaves a feasible, stationary final row") {
  ExperimentConfig cfg = small_pca_config();
  cfg.solver.beta_hat = 0.08 * 50.0 / 1000.0;
  cfg.solver.max_iters = 30000;
  cfg.solver.tol = 1e-4;
  cfg.output.trace_every = 50;
  const RunResult r = run_experiment(cfg);
  CHECK(r.termination == Termination::tolerance);
  CHECK(r.final_stationarity < 1e-4);
  CHECK(r.final_feasibility <= 1e-6);
  CHECK(r.trace.back().iter == r.iterations);  // final iterate always recorded
  REQUIRE(r.final_dist_solution.has_value());
}

TEST_CASE("divergent runs keep their partial trace") {
  ExperimentConfig cfg = small_pca_config();
  cfg.solver.beta_hat = 1e6;
  cfg.solver.max_iters = 500;
  const RunResult r = run_experiment(cfg);
  CHECK(r.termination == Termination::divergence);
  CHECK(!r.trace.empty());
  CHECK(!r.divergence_message.empty());
}

TEST_CASE("csv emission: header, empty trace, field formats") {
  const auto path = temp_file("rfextra_trace_empty.csv");
  emit_csv({}, path.string());
  const auto lines = read_lines(path);
  REQUIRE(lines.size() == 1);
  CHECK(lines[0] ==
        "iter,comm_rounds,gradient_evals,stationarity,consensus,feasibility,"
        "dist_solution,fval,surrogate_norm,wall_ms");

  TraceRecord a;
  a.iter = 0;
  a.stationarity = 1.0 / 3.0;
  TraceRecord b;
  b.iter = 7;
  b.dist_solution = 0.125;
  emit_csv({a, b, b}, path.string());
  const auto rows = read_lines(path);
  REQUIRE(rows.size() == 4);
  // absent reference serializes as an empty field
  CHECK(rows[1].find(",,") != std::string::npos);
  CHECK(rows[2].find(",0.125,") != std::string::npos);
  std::filesystem::remove(path);
}

TEST_CASE("csv round-trips doubles bit-exactly") {
  ExperimentConfig cfg = small_pca_config();
  cfg.solver.max_iters = 25;
  const auto path = temp_file("rfextra_trace_roundtrip.csv");
  cfg.output.csv = path.string();
  const RunResult r = run_experiment(cfg);
  const auto lines = read_lines(path);
  REQUIRE(lines.size() == r.trace.size() + 1);
  for (std::size_t k = 0; k < r.trace.size(); ++k) {
    std::stringstream row(lines[k + 1]);
    std::string field;
    for (int c = 0; c < 4; ++c) std::getline(row, field, ',');
    const double parsed = std::strtod(field.c_str(), nullptr);
    CHECK(std::memcmp(&parsed, &r.trace[k].stationarity, sizeof(double)) == 0);
  }
  std::filesystem::remove(path);
}

TEST_CASE("identical configs produce identical traces") {
  ExperimentConfig cfg = small_pca_config();
  cfg.solver.max_iters = 60;
  const auto path_a = temp_file("rfextra_det_a.csv");
  const auto path_b = temp_file("rfextra_det_b.csv");
  cfg.output.csv = path_a.string();
  run_experiment(cfg);
  cfg.output.csv = path_b.string();
  run_experiment(cfg);
  const auto la = read_lines(path_a);
  const auto lb = read_lines(path_b);
  REQUIRE(la.size() == lb.size());
  for (std::size_t i = 0; i < la.size(); ++i)
    CHECK(strip_wall(la[i]) == strip_wall(lb[i]));
  std::filesystem::remove(path_a);
  std::filesystem::remove(path_b);
}

TEST_CASE("grid search ranking rules") {
  ExperimentConfig cfg = small_pca_config();
  cfg.solver.max_iters = 30000;
  cfg.solver.tol = 1e-8;
  cfg.output.trace_every = 1000;

  // singleton grid
  const GridSearchResult single = grid_search(cfg, {0.004});
  REQUIRE(single.best.has_value());
  CHECK(single.points.size() == 1);
  CHECK(*single.best == 0);

  // a stable point beats a divergent one
  const GridSearchResult pair = grid_search(cfg, {1e6, 0.004}, /*jobs=*/2);
  REQUIRE(pair.best.has_value());
  CHECK(pair.points[0].termination == Termination::divergence);
  CHECK(*pair.best == 1);

  // every point divergent: explicit no-winner
  const GridSearchResult none = grid_search(cfg, {1e6, 1e7});
  CHECK(!none.best.has_value());

  CHECK_THROWS_AS(grid_search(cfg, {}), std::invalid_argument);
}

TEST_CASE("grid search on the paper grid selects the largest stable step") {
  ExperimentConfig cfg;
  cfg.problem = PcaSyntheticConfig{};  // full default instance
  cfg.graph.kind = GraphKind::erdos_renyi;
  cfg.graph.p = 0.6;
  cfg.graph.seed = 7;
  cfg.solver.beta_penalty = 10.0;
  cfg.solver.max_iters = 20000;
  cfg.solver.tol = 1e-8;
  cfg.output.trace_every = 5000;
  const std::vector<double> grid = default_beta_hat_grid(cfg);
  CHECK(grid.size() == 20);
  const GridSearchResult res = grid_search(cfg, grid, /*jobs=*/4);
  REQUIRE(res.best.has_value());
  const double winner = res.points[*res.best].beta_hat;
  // within one grid neighbor of the expected selection
  CHECK(winner >= 0.06 - 1e-12);
  CHECK(winner <= 0.08 + 1e-12);
  CHECK(res.points[*res.best].reached);
}

TEST_CASE("mnist-style config needs a dataset path") {
  ExperimentConfig cfg;
  cfg.problem = PcaMnistConfig{};
  CHECK_THROWS_AS(run_experiment(cfg), ConfigError);
}

TEST_CASE("lrmc runs default to the 1500-iteration cap") {
  ExperimentConfig cfg;
  LrmcConfig p;
  p.n = 4;
  p.d = 16;
  p.r = 2;
  p.T = 32;
  p.seed = 3;
  p.ridge = 1e-2;
  p.mask_rate = 0.5;
  cfg.problem = p;
  cfg.graph.kind = GraphKind::ring;
  cfg.solver.beta_hat = 1e-4;
  cfg.solver.beta_penalty = 10.0;
  cfg.solver.tol = 0.0;  // budget exit; max_iters left at the default
  cfg.output.trace_every = 100;
  const RunResult r = run_experiment(cfg);
  CHECK(r.termination == Termination::budget);
  CHECK(r.iterations == 1500);
  CHECK(r.trace.size() == 16);  // 0,100,...,1500
}

TEST_CASE("cli: run, exit codes, gen round trips") {
  const auto cfg_path = temp_file("rfextra_cli.cfg");
  const auto csv_path = temp_file("rfextra_cli_out.csv");
  write_file(cfg_path,
             "problem.kind = pca_synthetic\n"
             "problem.n = 4\nproblem.m = 50\nproblem.d = 8\nproblem.r = 3\n"
             "problem.seed = 5\n"
             "graph.kind = erdos_renyi\ngraph.p = 0.8\ngraph.seed = 3\n"
             "solver.beta_hat = 0.004\nsolver.beta_penalty = 10\n"
             "solver.max_iters = 40\nsolver.tol = 0\n");
  {
    const std::string out = csv_path.string();
    const char* argv[] = {"rfextra",      "run",  "--config", cfg_path.c_str(),
                          "--out", out.c_str()};
    CHECK(cli_main(6, argv) == 0);
    CHECK(std::filesystem::exists(csv_path));
  }
  {
    const char* argv[] = {"rfextra", "run", "--config", "/nonexistent.cfg"};
    CHECK(cli_main(4, argv) == 2);
  }
  {
    const char* argv[] = {"rfextra", "run", "--config", cfg_path.c_str(), "--set",
                          "solver.nope=1"};
    CHECK(cli_main(6, argv) == 2);
  }
  {
    const char* argv[] = {"rfextra", "frobnicate"};
    CHECK(cli_main(2, argv) == 2);
  }
  {
    // a clearly divergent run exits 1
    const char* argv[] = {"rfextra", "run",   "--config", cfg_path.c_str(),
                          "--set",   "solver.beta_hat=1e6"};
    CHECK(cli_main(6, argv) == 1);
  }
  const auto graph_path = temp_file("rfextra_cli_graph.txt");
  {
    const std::string out = graph_path.string();
    const char* argv[] = {"rfextra", "gen", "graph", "--kind", "ring",
                          "--n",     "6",   "--out", out.c_str()};
    CHECK(cli_main(9, argv) == 0);
    const Topology t = load_topology(out);
    CHECK(t.n == 6);
    CHECK(t.edges.size() == 6);
  }
  {
    // the generated graph file feeds back through --graph-file
    const std::string graph = graph_path.string();
    const char* argv[] = {"rfextra",      "run",          "--config",
                          cfg_path.c_str(), "--graph-file", graph.c_str(),
                          "--set",        "problem.n=6"};
    CHECK(cli_main(8, argv) == 0);
  }
  const auto idx_path = temp_file("rfextra_cli.idx");
  {
    const std::string out = idx_path.string();
    const char* argv[] = {"rfextra", "gen",  "idx", "--count", "16",
                          "--seed",  "3",    "--out", out.c_str()};
    CHECK(cli_main(9, argv) == 0);
    const IdxImages img = read_idx_images(out);
    CHECK(img.count == 16);
    CHECK(img.rows == 28);
  }
  std::filesystem::remove(cfg_path);
  std::filesystem::remove(csv_path);
  std::filesystem::remove(graph_path);
  std::filesystem::remove(idx_path);
}

TEST_CASE("cli: theory battery exits zero when every check passes") {
  const char* argv[] = {"rfextra",   "theory", "--all",   "--samples",
                        "150",       "--pairs", "100",    "--seed", "99"};
  CHECK(cli_main(9, argv) == 0);
}
