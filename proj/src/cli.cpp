#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <sstream>

#include "rfextra/harness.hpp"
#include "rfextra/rng.hpp"
#include "rfextra/theory.hpp"

namespace rfextra {

namespace {

void apply_cli_overrides(ExperimentConfig& cfg,
                         const std::vector<std::string>& sets,
                         const std::string& mnist, const std::string& graph_file,
                         const std::string& out_csv) {
  for (const std::string& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos)
      throw ConfigError("--set expects 'section.key=value', got '" + s + "'");
    std::string key = s.substr(0, eq), value = s.substr(eq + 1);
    apply_override(cfg, key, value);
  }
  if (!mnist.empty()) {
    auto* p = std::get_if<PcaMnistConfig>(&cfg.problem);
    if (!p) throw ConfigError("--mnist requires problem.kind = pca_mnist");
    p->path = mnist;
  }
  if (!graph_file.empty()) {
    cfg.graph.kind = GraphKind::file;
    cfg.graph.path = graph_file;
  }
  if (!out_csv.empty()) cfg.output.csv = out_csv;
}

void print_run_summary(const RunResult& r) {
  std::printf("termination: %s\n", termination_name(r.termination));
  std::printf("iterations: %ld\n", r.iterations);
  std::printf("alpha: %.17g  beta: %.17g\n", r.resolved_alpha, r.resolved_beta);
  std::printf("stationarity: %.6e  consensus: %.6e  feasibility: %.6e\n",
              r.final_stationarity, r.final_consensus, r.final_feasibility);
  if (r.final_dist_solution)
    std::printf("dist_solution: %.6e\n", *r.final_dist_solution);
  if (r.termination == Termination::divergence)
    std::printf("divergence: %s\n", r.divergence_message.c_str());
}

std::vector<double> parse_grid_list(const std::string& csv) {
  std::vector<double> grid;
  std::string item;
  std::stringstream ss(csv);
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t pos = 0;
    grid.push_back(std::stod(item, &pos));
    if (pos != item.size())
      throw ConfigError("--grid: bad number '" + item + "'");
  }
  if (grid.empty()) throw ConfigError("--grid: empty list");
  return grid;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"decentralized retraction-free optimization on the Stiefel manifold"};
  app.require_subcommand(1);

  std::string config_path, mnist, graph_file, out_csv, grid_list;
  std::vector<std::string> sets;
  int jobs = 1;
  int samples = 1000, pairs = 200;
  std::uint64_t theory_seed = 99;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "experiment config file")->required();
    sub->add_option("--set", sets, "override 'section.key=value' (repeatable)");
    sub->add_option("--mnist", mnist, "MNIST IDX image file (problem.path shortcut)");
    sub->add_option("--graph-file", graph_file, "edge-list graph file (graph.kind=file shortcut)");
    sub->add_option("--out", out_csv, "trace CSV path (output.csv shortcut)");
  };

  CLI::App* run = app.add_subcommand("run", "run a single experiment");
  add_common(run);

  CLI::App* grid = app.add_subcommand("grid", "sweep the step-size grid");
  add_common(grid);
  grid->add_option("--grid", grid_list, "comma-separated beta_hat values (default: per-problem grid)");
  grid->add_option("--jobs", jobs, "worker threads for independent grid points");

  CLI::App* theory = app.add_subcommand("theory", "run the numerical theory checks");
  theory->add_flag("--all", "run every check (default)");
  theory->add_option("--samples", samples, "region samples per coercivity check");
  theory->add_option("--pairs", pairs, "sampled pairs for constant estimation");
  theory->add_option("--seed", theory_seed, "sampler seed");

  CLI::App* gen = app.add_subcommand("gen", "write synthetic inputs");
  gen->require_subcommand(1);
  std::string gen_kind = "ring", gen_out;
  int gen_n = 8, gen_count = 16, gen_rows = 28, gen_cols = 28;
  double gen_p = 0.6;
  std::uint64_t gen_seed = 1;
  bool gen_zero = false;
  CLI::App* gen_graph = gen->add_subcommand("graph", "write an edge-list graph file");
  gen_graph->add_option("--kind", gen_kind, "ring|star|complete|erdos_renyi");
  gen_graph->add_option("--n", gen_n, "agent count");
  gen_graph->add_option("--p", gen_p, "edge probability (erdos_renyi)");
  gen_graph->add_option("--seed", gen_seed, "sampling seed");
  gen_graph->add_option("--out", gen_out, "output path")->required();
  CLI::App* gen_idx = gen->add_subcommand("idx", "write a synthetic IDX image file");
  gen_idx->add_option("--count", gen_count, "image count");
  gen_idx->add_option("--rows", gen_rows, "image rows");
  gen_idx->add_option("--cols", gen_cols, "image cols");
  gen_idx->add_option("--seed", gen_seed, "pixel seed");
  gen_idx->add_flag("--zero", gen_zero, "all-zero pixels");
  gen_idx->add_option("--out", gen_out, "output path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (run->parsed()) {
      ExperimentConfig cfg = parse_config_file(config_path);
      apply_cli_overrides(cfg, sets, mnist, graph_file, out_csv);
      const RunResult r = run_experiment(cfg);
      print_run_summary(r);
      if (!cfg.output.csv.empty())
        std::printf("csv: %s (%zu rows)\n", cfg.output.csv.c_str(), r.trace.size());
      return r.termination == Termination::divergence ? 1 : 0;
    }

    if (grid->parsed()) {
      ExperimentConfig cfg = parse_config_file(config_path);
      apply_cli_overrides(cfg, sets, mnist, graph_file, out_csv);
      const std::vector<double> values =
          grid_list.empty() ? default_beta_hat_grid(cfg) : parse_grid_list(grid_list);
      const GridSearchResult res = grid_search(cfg, values, jobs);
      std::printf("%-14s %-11s %-10s %s\n", "beta_hat", "result", "iters", "stationarity");
      for (const GridPointSummary& s : res.points)
        std::printf("%-14.8g %-11s %-10ld %.6e\n", s.beta_hat,
                    termination_name(s.termination), s.iterations,
                    s.final_stationarity);
      if (!res.best) {
        std::printf("no winner: every grid point diverged\n");
        return 1;
      }
      const GridPointSummary& b = res.points[*res.best];
      std::printf("best: beta_hat=%.8g (%s after %ld iterations)\n", b.beta_hat,
                  termination_name(b.termination), b.iterations);
      if (!cfg.output.csv.empty()) {
        ExperimentConfig best_cfg = cfg;
        best_cfg.solver.beta_hat = b.beta_hat;
        run_experiment(best_cfg);
        std::printf("csv: %s (winner rerun)\n", cfg.output.csv.c_str());
      }
      return 0;
    }

    if (theory->parsed()) {
      const auto lines = run_default_theory_checks(samples, pairs, theory_seed);
      bool all = true;
      for (const TheoryCheckLine& l : lines) {
        std::printf("CHECK %s %s %s\n", l.name.c_str(), l.pass ? "PASS" : "FAIL",
                    l.metrics.c_str());
        all = all && l.pass;
      }
      return all ? 0 : 1;
    }

    if (gen->parsed()) {
      if (gen_graph->parsed()) {
        const Topology t = build_topology(topology_kind_from_string(gen_kind),
                                          gen_n, gen_p, gen_seed);
        save_topology(t, gen_out);
        std::printf("wrote %s (n=%d, %zu edges)\n", gen_out.c_str(), t.n, t.edges.size());
        return 0;
      }
      IdxImages img;
      img.count = static_cast<std::uint32_t>(gen_count);
      img.rows = static_cast<std::uint32_t>(gen_rows);
      img.cols = static_cast<std::uint32_t>(gen_cols);
      img.pixels.resize(std::size_t(gen_count) * gen_rows * gen_cols, 0);
      if (!gen_zero) {
        Rng rng(gen_seed);
        for (auto& px : img.pixels) px = static_cast<std::uint8_t>(rng.below(256));
      }
      write_idx_images(gen_out, img);
      std::printf("wrote %s (%u images of %ux%u)\n", gen_out.c_str(), img.count,
                  img.rows, img.cols);
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace rfextra
