#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "rfextra/network.hpp"
#include "rfextra/problems.hpp"
#include "rfextra/solvers.hpp"

namespace rfextra {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PcaSyntheticConfig {
  int n = 8, m = 1000, d = 10, r = 5;
  double xi = 0.8;
  std::uint64_t seed = 1;
};

struct PcaMnistConfig {
  std::string path;
  int n = 8, r = 2;
  std::uint64_t seed = 1;
};

struct LrmcConfig {
  int n = 8, d = 100, r = 5, T = 1000;
  double noise = 1e-3;
  std::uint64_t seed = 1;
  double ridge = 1e-10;
  double mask_rate = -1.0;  // <= 0 selects the rank-based default rate
};

enum class GraphKind { ring, star, complete, erdos_renyi, file };

struct GraphConfig {
  GraphKind kind = GraphKind::ring;
  double p = 0.6;
  std::uint64_t seed = 7;
  double theta = 0.5;
  std::string path;  // edge-list file for kind == file
};

enum class SolverKind { rf_extra, dprgd, rextra_style };

struct SolverSettings {
  SolverKind kind = SolverKind::rf_extra;
  double beta_hat = 0.08;     // raw grid value; α = β̂ / problem denominator
  double beta_penalty = -1.0; // <= 0 selects the sampled beta_floor default
  long max_iters = -1;        // < 0 selects the per-problem cap (1500 for lrmc)
  double tol = -1.0;          // < 0 selects the per-problem default threshold
  std::optional<std::uint64_t> init_seed;
};

struct OutputConfig {
  std::string csv;
  long trace_every = 0;  // 0 selects the per-problem default (1, or 10 for MNIST)
};

struct ExperimentConfig {
  std::variant<PcaSyntheticConfig, PcaMnistConfig, LrmcConfig> problem;
  GraphConfig graph;
  SolverSettings solver;
  OutputConfig output;
};

/// Line-oriented `section.key = value` text; '#' starts a comment. Unknown
/// keys are rejected with the offending key named.
ExperimentConfig parse_config_file(const std::string& path);
ExperimentConfig parse_config_lines(
    const std::vector<std::pair<std::string, std::string>>& kvs);

/// Applies one `section.key=value` override on top of a parsed config.
void apply_override(ExperimentConfig& cfg, const std::string& key,
                    const std::string& value);

struct TraceRecord {
  long iter = 0;
  long comm_rounds = 0;
  long gradient_evals = 0;
  double stationarity = 0.0;   // ‖grad f at polar(x̄)‖_F
  double consensus = 0.0;      // ‖X − X̄‖_F over the stack
  double feasibility = 0.0;    // ‖x̄ᵀx̄ − I‖_F
  std::optional<double> dist_solution;  // d_s(polar(x̄), X*), when a reference exists
  double fval = 0.0;           // global objective at polar(x̄)
  double surrogate_norm = 0.0; // ‖H(x̄)‖_F at the configured penalty
  double wall_ms = 0.0;
};

enum class Termination { tolerance, budget, divergence };

const char* termination_name(Termination t);

struct RunResult {
  std::vector<TraceRecord> trace;
  Termination termination = Termination::budget;
  long iterations = 0;
  double final_stationarity = 0.0;
  double final_consensus = 0.0;
  double final_feasibility = 0.0;
  std::optional<double> final_dist_solution;
  double resolved_alpha = 0.0;
  double resolved_beta = 0.0;
  std::string divergence_message;
};

/// Runs one experiment. Deterministic given the config (wall_ms aside);
/// terminates on the stationarity threshold, the iteration budget, or
/// divergence, recording every trace_every iterations plus the final iterate.
/// Writes the CSV when output.csv is set.
RunResult run_experiment(const ExperimentConfig& cfg);

/// Header: iter,comm_rounds,gradient_evals,stationarity,consensus,
/// feasibility,dist_solution,fval,surrogate_norm,wall_ms. Floats carry 17
/// significant digits; an absent dist_solution serializes as an empty field.
void emit_csv(const std::vector<TraceRecord>& trace, const std::string& path);

struct GridPointSummary {
  double beta_hat = 0.0;
  Termination termination = Termination::budget;
  bool reached = false;
  long iterations = 0;
  double final_stationarity = 0.0;
};

struct GridSearchResult {
  std::vector<GridPointSummary> points;
  std::optional<std::size_t> best;  // empty when every point diverged
};

/// Runs every grid point independently (optionally on worker threads). Best =
/// fewest iterations to reach tol; ties broken by smaller final stationarity,
/// then smaller β̂. Diverged and non-reaching points rank last.
GridSearchResult grid_search(const ExperimentConfig& cfg_template,
                             const std::vector<double>& beta_hat_grid,
                             int jobs = 1);

/// Paper-style default grids per problem family.
std::vector<double> default_beta_hat_grid(const ExperimentConfig& cfg);

/// CLI entry: subcommands run / grid / theory / gen. Exit codes: 0 success,
/// 1 divergence or no grid winner or failed checks, 2 usage/config errors.
int cli_main(int argc, const char* const* argv);

}  // namespace rfextra
