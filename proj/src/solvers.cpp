#include "rfextra/solvers.hpp"

#include <cmath>

#include "rfextra/rng.hpp"
#include "rfextra/surrogate.hpp"

namespace rfextra {

namespace {

constexpr double kDivergenceCap = 1e8;

void validate_init(const Problem& problem, const MixingPair& mp,
                   const std::vector<Matrix>& x0) {
  const int n = problem.agents();
  if (mp.n() != n)
    throw std::invalid_argument("solver init: mixing matrix size != agent count");
  if (static_cast<int>(x0.size()) != n)
    throw std::invalid_argument("solver init: need one initial block per agent");
  for (const Matrix& x : x0)
    if (x.rows() != problem.ambient_rows() || x.cols() != problem.rank())
      throw std::invalid_argument("solver init: initial block has wrong shape");
}

// One neighbor exchange: out_i = Σ_j w_ij X_j. Zero weights are skipped, so
// only graph neighbors (and the diagonal) contribute.
std::vector<Matrix> mix_blocks(const Matrix& w, const std::vector<Matrix>& x) {
  const int n = static_cast<int>(x.size());
  std::vector<Matrix> out(n, Matrix::Zero(x[0].rows(), x[0].cols()));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double wij = w(i, j);
      if (wij != 0.0) out[i].noalias() += wij * x[j];
    }
  return out;
}

void check_finite(const StackedState& st) {
  for (const Matrix& x : st.X) {
    const double norm = x.norm();
    if (!std::isfinite(norm) || norm > kDivergenceCap)
      throw DivergenceError(st.iter, "solver diverged at iteration " +
                                         std::to_string(st.iter));
  }
  for (const Matrix& h : st.H_cache)
    if (!h.allFinite())
      throw DivergenceError(st.iter, "solver diverged at iteration " +
                                         std::to_string(st.iter));
}

}  // namespace

std::vector<Matrix> replicated_orthonormal_init(const Problem& problem,
                                                std::uint64_t seed) {
  Rng rng(seed);
  const Matrix z = random_orthonormal(rng, problem.ambient_rows(), problem.rank());
  return std::vector<Matrix>(problem.agents(), z);
}

Matrix average_iterate(const StackedState& st) {
  Matrix sum = st.X[0];
  for (std::size_t i = 1; i < st.X.size(); ++i) sum += st.X[i];
  return sum / static_cast<double>(st.X.size());
}

// ------------------------------------------------------------- RF-EXTRA

StackedState rf_extra_init(const Problem& problem, const MixingPair& mp,
                           const SolverConfig& cfg,
                           const std::vector<Matrix>& x0) {
  validate_init(problem, mp, x0);
  const int n = problem.agents();
  StackedState st;
  st.X = x0;
  st.H_cache.reserve(n);
  st.s.reserve(n);
  const SurrogateParams params{cfg.beta};
  for (int i = 0; i < n; ++i) {
    st.H_cache.push_back(surrogate_H(problem.local_gradient_fn(i), st.X[i], params));
    st.s.push_back(-cfg.alpha * st.H_cache.back());
  }
  return st;
}

void rf_extra_step(StackedState& st, const Problem& problem,
                   const MixingPair& mp, const SolverConfig& cfg) {
  const int n = problem.agents();
  const SurrogateParams params{cfg.beta};
  const auto mixed = mix_blocks(mp.W, st.X);

  std::vector<Matrix> x_next(n);
  for (int i = 0; i < n; ++i) x_next[i] = mixed[i] + st.s[i];

  std::vector<Matrix> h_next(n);
  for (int i = 0; i < n; ++i)
    h_next[i] = surrogate_H(problem.local_gradient_fn(i), x_next[i], params);

  // (W − V) X = θ(W − I) X, reusing the single exchange above.
  for (int i = 0; i < n; ++i)
    st.s[i] += mp.theta * (mixed[i] - st.X[i]) -
               cfg.alpha * (h_next[i] - st.H_cache[i]);

  st.X = std::move(x_next);
  st.H_cache = std::move(h_next);
  ++st.iter;
  ++st.comm_rounds;
  st.gradient_evals += n;
  check_finite(st);
}

// ------------------------------------------------------------- DPRGD analogue

StackedState dprgd_init(const Problem& problem, const MixingPair& mp,
                        const SolverConfig& cfg,
                        const std::vector<Matrix>& x0) {
  (void)cfg;
  validate_init(problem, mp, x0);
  StackedState st;
  st.X.reserve(x0.size());
  // project once here; every step ends retracted, so the per-iteration
  // retraction count stays at one
  for (const Matrix& x : x0) st.X.push_back(polar_orthonormalize(x));
  return st;
}

void dprgd_step(StackedState& st, const Problem& problem, const MixingPair& mp,
                const SolverConfig& cfg) {
  const int n = problem.agents();
  const auto mixed = mix_blocks(mp.W, st.X);
  std::vector<Matrix> x_next(n);
  for (int i = 0; i < n; ++i) {
    const Matrix g = riemannian_gradient(problem.local_gradient_fn(i), st.X[i]);
    x_next[i] = polar_orthonormalize(mixed[i] - cfg.alpha * g);
  }
  st.X = std::move(x_next);
  ++st.iter;
  ++st.comm_rounds;
  st.gradient_evals += n;
  check_finite(st);
}

// ------------------------------------------------------------- REXTRA analogue

StackedState rextra_style_init(const Problem& problem, const MixingPair& mp,
                               const SolverConfig& cfg,
                               const std::vector<Matrix>& x0) {
  validate_init(problem, mp, x0);
  const int n = problem.agents();
  StackedState st;
  st.X.reserve(n);
  for (const Matrix& x : x0) st.X.push_back(polar_orthonormalize(x));
  st.H_cache.reserve(n);
  st.s.reserve(n);
  for (int i = 0; i < n; ++i) {
    st.H_cache.push_back(
        riemannian_gradient(problem.local_gradient_fn(i), st.X[i]));
    st.s.push_back(-cfg.alpha * st.H_cache.back());
  }
  return st;
}

void rextra_style_step(StackedState& st, const Problem& problem,
                       const MixingPair& mp, const SolverConfig& cfg) {
  const int n = problem.agents();
  const auto mixed = mix_blocks(mp.W, st.X);

  std::vector<Matrix> x_next(n);
  for (int i = 0; i < n; ++i)
    x_next[i] = polar_orthonormalize(mixed[i] + st.s[i]);

  std::vector<Matrix> h_next(n);
  for (int i = 0; i < n; ++i)
    h_next[i] = riemannian_gradient(problem.local_gradient_fn(i), x_next[i]);

  for (int i = 0; i < n; ++i)
    st.s[i] += mp.theta * (mixed[i] - st.X[i]) -
               cfg.alpha * (h_next[i] - st.H_cache[i]);

  st.X = std::move(x_next);
  st.H_cache = std::move(h_next);
  ++st.iter;
  ++st.comm_rounds;
  st.gradient_evals += n;
  check_finite(st);
}

}  // namespace rfextra
