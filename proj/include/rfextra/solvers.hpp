#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "rfextra/network.hpp"
#include "rfextra/problems.hpp"

namespace rfextra {

struct SolverConfig {
  double alpha = 0.0;    // step size, > 0
  double beta = 1.0;     // orthogonality penalty (retraction-free methods)
  double theta = 0.5;    // correction mixing parameter, informational here
  long max_iters = 1000;
  double tol = 0.0;      // stationarity threshold; 0 disables early stopping
};

/// One synchronous network's worth of iteration memory. H_cache holds the
/// per-agent search direction evaluated at the current X blocks (surrogate H
/// for the retraction-free method, the tangent gradient for the retracted
/// EXTRA analogue) and is refreshed every step.
struct StackedState {
  std::vector<Matrix> X;
  std::vector<Matrix> s;
  std::vector<Matrix> H_cache;
  long iter = 0;
  long comm_rounds = 0;
  long gradient_evals = 0;  // one n-batch per completed iteration
};

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(long iteration, const std::string& what)
      : std::runtime_error(what), iteration_(iteration) {}
  long iteration() const { return iteration_; }

 private:
  long iteration_;
};

/// Default initialization: one seeded gaussian d×r matrix, QR-orthonormalized
/// and replicated to every agent, so the initial disagreement vanishes.
std::vector<Matrix> replicated_orthonormal_init(const Problem& problem,
                                                std::uint64_t seed);

/// Retraction-free EXTRA. Initialization sets s_i = −α·H_i(X_{i,0}); each
/// step performs one neighbor exchange of X, one surrogate evaluation per
/// agent (the previous value comes from H_cache), and the updates
///   X_{i,k+1} = Σ_j w_ij X_{j,k} + s_{i,k}
///   s_{i,k+1} = s_{i,k} + Σ_j (w_ij − v_ij) X_{j,k}
///               − α (H_i(X_{i,k+1}) − H_i(X_{i,k})).
StackedState rf_extra_init(const Problem& problem, const MixingPair& mp,
                           const SolverConfig& cfg,
                           const std::vector<Matrix>& x0);
void rf_extra_step(StackedState& st, const Problem& problem,
                   const MixingPair& mp, const SolverConfig& cfg);

/// Projected decentralized Riemannian gradient baseline (an honest analogue;
/// the published method differs in detail):
///   X_{i,k+1} = polar(Σ_j w_ij X_{j,k} − α·grad f_i(X_{i,k})).
StackedState dprgd_init(const Problem& problem, const MixingPair& mp,
                        const SolverConfig& cfg,
                        const std::vector<Matrix>& x0);
void dprgd_step(StackedState& st, const Problem& problem, const MixingPair& mp,
                const SolverConfig& cfg);

/// Retraction-based EXTRA analogue: the RF recursion with H_i replaced by the
/// tangent gradient at the (retracted) iterate, and the primal update
/// followed by a polar retraction. One exchange, one gradient, one retraction
/// per agent per iteration.
StackedState rextra_style_init(const Problem& problem, const MixingPair& mp,
                               const SolverConfig& cfg,
                               const std::vector<Matrix>& x0);
void rextra_style_step(StackedState& st, const Problem& problem,
                       const MixingPair& mp, const SolverConfig& cfg);

/// x̄ = (1/n) Σ X_i.
Matrix average_iterate(const StackedState& st);

}  // namespace rfextra
