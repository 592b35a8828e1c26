#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rfextra/network.hpp"
#include "rfextra/problems.hpp"

namespace rfextra {

/// Sampled estimates of the analysis constants. Sampling can only certify
/// lower bounds on the true suprema; beta_floor assembled from them is a
/// heuristic default, not a guarantee.
struct TheoryConstants {
  double L_f = 0.0;   // local-gradient Lipschitz estimate on the bounded set
  double L_g = 0.0;   // approximate-gradient-map Lipschitz estimate
  double L_b = 0.0;   // penalty-gradient Lipschitz estimate
  double L_H = 0.0;   // L_g + beta_floor · L_b
  double L_h = 0.0;   // Lipschitz estimate of the full surrogate gradient
  double M_g = 0.0;   // sup of ‖G_i‖ over the near-feasible region
  double M_H = 0.0;   // sup of ‖H_i‖ at beta_floor over the region
  double C0 = 0.0;    // sup of ‖∇f_i(XXᵀX)‖ over the region
  double beta_floor = 0.0;  // max{56 L_f², (6+21 C0)/5, 12√2 (M_g+1)}
  double rho_P = 0.0;
  double sigma2 = 0.0;
};

/// Seeded sampler for the near-feasible region
///   R = {X : ‖XᵀX − I‖_F ≤ 1/6}
/// and the bounded set B = {X : ‖X‖_F ≤ √(7r/6) + 1}.
struct RegionSampler {
  int d = 10;
  int r = 5;
  double feasibility_cap = 1.0 / 6.0;
  std::uint64_t seed = 0;

  double norm_cap() const;
};

/// Samples X = Z + εN with Z orthonormal (seeded QR) and ε scaled by
/// bisection until ‖XᵀX − I‖_F hits a target inside the cap; membership is
/// asserted per sample. The set includes exactly orthonormal points and
/// boundary-adjacent points with residual ≥ 0.9 of the cap.
std::vector<Matrix> sample_region_R(const RegionSampler& sampler, int count);

/// Gaussian matrices rescaled to random fractions of the B-norm cap.
std::vector<Matrix> sample_region_B(const RegionSampler& sampler, int count);

struct CoercivityReport {
  int samples = 0;
  int violations = 0;
  double worst_margin = 0.0;  // min over samples of ‖H‖² − ‖G‖² − β‖Q‖²
};

/// Checks ‖H(X)‖²_F ≥ ‖G(X)‖²_F + β‖XᵀX − I‖²_F on every sample, using the
/// global (averaged) maps, with tolerance 1e-10·(1 + rhs). Requires
/// beta ≥ (6 + 21·c0_hat)/5.
CoercivityReport check_coercivity(const Problem& problem,
                                  const SurrogateParams& params,
                                  const std::vector<Matrix>& samples,
                                  double c0_hat);

struct SpectrumReport {
  double rho_P = 0.0;
  bool spectral_pass = false;       // ρ(P) < 1
  double witness_ratio_error = 0.0; // |‖P[0;u]‖/‖u‖ − √2| for mean-zero u
  bool witness_pass = false;
  bool power_decay_pass = false;    // ‖P^k‖^{1/k} ≤ ρ + 0.05 at k = 200
};

/// Spectral contraction check for the joint-error transition matrix, plus the
/// witness that no plain Frobenius-norm contraction exists (the ratio is
/// exactly √2), plus a power-decay check standing in for the equivalent-norm
/// contraction.
SpectrumReport check_transition_spectrum(const MixingPair& mp);

/// Difference-quotient and supremum estimates over pair_count sampled pairs
/// (pair_count ≥ 100). Hats are monotone in pair_count for a fixed seed: the
/// sample stream is a prefix. β-dependent quantities are evaluated at the
/// assembled beta_floor. rho_P/sigma2 are filled when a mixing pair is given.
TheoryConstants estimate_constants(const Problem& problem,
                                   const RegionSampler& sampler, int pair_count,
                                   const MixingPair* mp = nullptr);

struct RateReport {
  double slope = 0.0;
  bool pass = false;
  int grid_points = 0;
};

/// Fits the log-log slope of S(K) = (1/(K+1)) Σ_{k≤K} h_k² over a log-spaced
/// grid of K in [k_min, k_max]; passes when slope ≤ −0.8, i.e. decay at least
/// as fast as K^{-0.8}. Requires k_max ≥ 10·k_min ≥ 100 and a trace longer
/// than k_max.
RateReport check_rate(const std::vector<double>& h_values, int k_min, int k_max);

/// Same fit applied to squared feasibility values.
RateReport check_feasibility_rate(const std::vector<double>& feasibility_values,
                                  int k_min, int k_max);

struct TheoryCheckLine {
  std::string name;
  bool pass = false;
  std::string metrics;
};

/// Runs the full default battery (constants, coercivity on both benchmark
/// families, spectrum sweep, Frobenius witness, empirical rate fits) and
/// returns one line per check.
std::vector<TheoryCheckLine> run_default_theory_checks(int region_samples,
                                                       int pair_count,
                                                       std::uint64_t seed);

}  // namespace rfextra
