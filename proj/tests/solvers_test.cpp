#include <doctest.h>

#include <atomic>

#include "rfextra/network.hpp"
#include "rfextra/problems.hpp"
#include "rfextra/rng.hpp"
#include "rfextra/solvers.hpp"
#include "rfextra/surrogate.hpp"
#include "test_support.hpp"

using namespace rfextra;

namespace {

PcaProblem small_pca(int n = 4) { return generate_synthetic_pca(n, 50, 8, 3, 0.8, 5); }

// agent-count-aware zero objective
class ZeroProblem final : public Problem {
 public:
  ZeroProblem(int n, int d, int r) : n_(n), d_(d), r_(r) {}
  int agents() const override { return n_; }
  int ambient_rows() const override { return d_; }
  int rank() const override { return r_; }
  double local_value(int, const Matrix&) const override { return 0.0; }
  Matrix local_gradient(int, const Matrix& x) const override {
    return Matrix::Zero(x.rows(), x.cols());
  }
  double alpha_denominator() const override { return 1.0; }

 private:
  int n_, d_, r_;
};

// counts raw local-gradient invocations
class CountingProblem final : public Problem {
 public:
  explicit CountingProblem(const Problem& inner) : inner_(inner) {}
  int agents() const override { return inner_.agents(); }
  int ambient_rows() const override { return inner_.ambient_rows(); }
  int rank() const override { return inner_.rank(); }
  double local_value(int i, const Matrix& x) const override {
    return inner_.local_value(i, x);
  }
  Matrix local_gradient(int i, const Matrix& x) const override {
    ++calls;
    return inner_.local_gradient(i, x);
  }
  double alpha_denominator() const override { return inner_.alpha_denominator(); }
  mutable std::atomic<long> calls{0};

 private:
  const Problem& inner_;
};

Matrix canonical_orthonormal(int d, int r) {
  Matrix x = Matrix::Zero(d, r);
  for (int j = 0; j < r; ++j) x(j, j) = 1.0;
  return x;
}

MixingPair single_agent_pair() {
  return with_correction(Matrix::Identity(1, 1), 0.5);
}

SolverConfig pca_config(double alpha = 0.08 / 50.0, double beta = 10.0) {
  SolverConfig cfg;
  cfg.alpha = alpha;
  cfg.beta = beta;
  return cfg;
}

}  // namespace

TEST_CASE("rf init: zero objective from an exactly feasible start gives zero s") {
  const ZeroProblem p(4, 8, 3);
  const MixingPair mp = with_correction(
      metropolis_weights(build_topology(TopologyKind::ring, 4)), 0.5);
  const std::vector<Matrix> x0(4, canonical_orthonormal(8, 3));
  const StackedState st = rf_extra_init(p, mp, pca_config(), x0);
  for (const Matrix& s : st.s) CHECK(s.norm() == 0.0);
  CHECK(st.iter == 0);
  CHECK(st.comm_rounds == 0);
}

TEST_CASE("rf init: averaged identity holds by construction") {
  const PcaProblem p = small_pca();
  const MixingPair mp = with_correction(
      metropolis_weights(build_topology(TopologyKind::erdos_renyi, 4, 0.8, 3)), 0.5);
  const SolverConfig cfg = pca_config();
  const StackedState st =
      rf_extra_init(p, mp, cfg, replicated_orthonormal_init(p, 7));
  Matrix sbar = Matrix::Zero(p.d, p.r), hbar = Matrix::Zero(p.d, p.r);
  for (int i = 0; i < p.n; ++i) {
    sbar += st.s[i];
    hbar += st.H_cache[i];
  }
  sbar /= p.n;
  hbar /= p.n;
  CHECK((sbar + cfg.alpha * hbar).norm() <= 1e-13 * (1.0 + cfg.alpha * hbar.norm()));

  // H_cache composes from the two component maps
  for (int i = 0; i < p.n; ++i) {
    const Matrix expected = approx_grad_G(p.local_gradient_fn(i), st.X[i]) +
                            cfg.beta * penalty_gradient(st.X[i]);
    CHECK((st.H_cache[i] - expected).norm() <= 1e-13 * (1.0 + expected.norm()));
  }
}

TEST_CASE("rf init validates shapes") {
  const PcaProblem p = small_pca();
  const MixingPair mp = with_correction(
      metropolis_weights(build_topology(TopologyKind::ring, 4)), 0.5);
  std::vector<Matrix> bad(4, Matrix::Zero(8, 2));
  CHECK_THROWS_AS(rf_extra_init(p, mp, pca_config(), bad), std::invalid_argument);
  std::vector<Matrix> few(3, Matrix::Zero(8, 3));
  CHECK_THROWS_AS(rf_extra_init(p, mp, pca_config(), few), std::invalid_argument);
}

TEST_CASE("single agent degenerates to the centralized recursion") {
  const PcaProblem p = small_pca(1);
  const MixingPair mp = single_agent_pair();
  const SolverConfig cfg = pca_config();
  StackedState st = rf_extra_init(p, mp, cfg, replicated_orthonormal_init(p, 9));

  Matrix x = st.X[0];
  for (int k = 0; k < 10; ++k) {
    rf_extra_step(st, p, mp, cfg);
    x -= cfg.alpha * surrogate_H(p.local_gradient_fn(0), x, SurrogateParams{cfg.beta});
    CHECK((st.X[0] - x).norm() <= 1e-12 * (1.0 + x.norm()));
  }
}

TEST_CASE("identical agents with uniform mixing stay identical") {
  PcaProblem p = small_pca(1);
  PcaProblem shared;
  shared.n = 4;
  shared.d = p.d;
  shared.r = p.r;
  shared.blocks = std::vector<Matrix>(4, p.blocks[0]);
  shared.rebuild_gram_cache();
  const MixingPair mp = with_correction(
      metropolis_weights(build_topology(TopologyKind::complete, 4)), 0.5);
  const SolverConfig cfg = pca_config();
  StackedState st =
      rf_extra_init(shared, mp, cfg, replicated_orthonormal_init(shared, 11));
  for (int k = 0; k < 20; ++k) {
    rf_extra_step(st, shared, mp, cfg);
    for (int i = 1; i < 4; ++i) CHECK((st.X[i] - st.X[0]).norm() == 0.0);
  }
}

TEST_CASE("averaged identities persist along a run") {
  const PcaProblem p = small_pca();
  const MixingPair mp = with_correction(
      metropolis_weights(build_topology(TopologyKind::erdos_renyi, 4, 0.6, 7)), 0.5);
  const SolverConfig cfg = pca_config();
  StackedState st = rf_extra_init(p, mp, cfg, replicated_orthonormal_init(p, 13));

  for (int k = 0; k < 200; ++k) {
    Matrix xbar_before = average_iterate(st);
    Matrix hbar = Matrix::Zero(p.d, p.r), sbar = Matrix::Zero(p.d, p.r);
    for (int i = 0; i < p.n; ++i) {
      hbar += st.H_cache[i];
      sbar += st.s[i];
    }
    hbar /= p.n;
    sbar /= p.n;
    CHECK((sbar + cfg.alpha * hbar).norm() <=
          1e-11 * (1.0 + cfg.alpha * hbar.norm()));
    rf_extra_step(st, p, mp, cfg);
    const Matrix xbar_after = average_iterate(st);
    CHECK((xbar_after - xbar_before + cfg.alpha * hbar).norm() <=
          1e-11 * (1.0 + xbar_before.norm()));
  }
}

TEST_CASE("average_iterate: identical blocks, cancellation, and the Kahan oracle") {
  StackedState st;
  Rng rng(15);
  const Matrix z = rng.gaussian_matrix(6, 2);
  st.X = {z, z, z, z};
  CHECK((average_iterate(st) - z).norm() == 0.0);

  st.X = {z, Matrix(-z)};
  CHECK(average_iterate(st).norm() == 0.0);

  st.X.clear();
  for (int i = 0; i < 7; ++i) st.X.push_back(rng.gaussian_matrix(6, 2));
  const Matrix kahan = testsupport::kahan_mean(st.X);
  CHECK((average_iterate(st) - kahan).norm() <= 1e-14 * (1.0 + kahan.norm()));
}

TEST_CASE("gradient and communication accounting") {
  const PcaProblem base = small_pca();
  const CountingProblem p(base);
  const MixingPair mp = with_correction(
      metropolis_weights(build_topology(TopologyKind::ring, 4)), 0.5);
  const SolverConfig cfg = pca_config();

  StackedState st = rf_extra_init(p, mp, cfg, replicated_orthonormal_init(p, 17));
  CHECK(p.calls == 4);  // one evaluation per agent at the initial point
  for (int k = 1; k <= 5; ++k) {
    const long before = p.calls;
    rf_extra_step(st, p, mp, cfg);
    CHECK(p.calls - before == 4);  // one per agent per iteration
    CHECK(st.comm_rounds == k);
    CHECK(st.iter == k);
    CHECK(st.gradient_evals == 4 * k);
  }

  p.calls = 0;
  StackedState sd = dprgd_init(p, mp, cfg, replicated_orthonormal_init(p, 17));
  CHECK(p.calls == 0);
  dprgd_step(sd, p, mp, cfg);
  CHECK(p.calls == 4);
  CHECK(sd.comm_rounds == 1);

  p.calls = 0;
  StackedState sr = rextra_style_init(p, mp, cfg, replicated_orthonormal_init(p, 17));
  CHECK(p.calls == 4);
  rextra_style_step(sr, p, mp, cfg);
  CHECK(p.calls == 8);
  CHECK(sr.gradient_evals == 4);
}

TEST_CASE("relabeling agents permutes the iterates") {
  const PcaProblem p = small_pca();
  const int n = p.n;
  const std::vector<int> perm = {2, 0, 3, 1};  // sigma(i): new index of old agent i

  PcaProblem permuted;
  permuted.n = n;
  permuted.d = p.d;
  permuted.r = p.r;
  permuted.blocks.resize(n);
  for (int i = 0; i < n; ++i) permuted.blocks[perm[i]] = p.blocks[i];
  permuted.rebuild_gram_cache();

  const Topology t = build_topology(TopologyKind::erdos_renyi, n, 0.7, 19);
  const Matrix w = metropolis_weights(t);
  Matrix wp = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) wp(perm[i], perm[j]) = w(i, j);
  const MixingPair mp = with_correction(w, 0.5);
  const MixingPair mpp = with_correction(wp, 0.5);

  const SolverConfig cfg = pca_config();
  const auto x0 = replicated_orthonormal_init(p, 21);
  StackedState a = rf_extra_init(p, mp, cfg, x0);
  StackedState b = rf_extra_init(permuted, mpp, cfg, x0);
  for (int k = 0; k < 5; ++k) {
    rf_extra_step(a, p, mp, cfg);
    rf_extra_step(b, permuted, mpp, cfg);
  }
  for (int i = 0; i < n; ++i)
    CHECK((a.X[i] - b.X[perm[i]]).norm() <= 1e-12 * (1.0 + a.X[i].norm()));
}

TEST_CASE("divergence guard raises with the iteration index") {
  const PcaProblem p = small_pca();
  const MixingPair mp = with_correction(
      metropolis_weights(build_topology(TopologyKind::ring, 4)), 0.5);
  SolverConfig cfg = pca_config(/*alpha=*/50.0, /*beta=*/10.0);
  StackedState st = rf_extra_init(p, mp, cfg, replicated_orthonormal_init(p, 23));
  bool thrown = false;
  for (int k = 0; k < 200 && !thrown; ++k) {
    try {
      rf_extra_step(st, p, mp, cfg);
    } catch (const DivergenceError& e) {
      thrown = true;
      CHECK(e.iteration() >= 1);
      CHECK(e.iteration() == st.iter);
    }
  }
  CHECK(thrown);
}

TEST_CASE("dprgd: fixed point for the zero objective and feasible iterates") {
  const ZeroProblem p(4, 8, 3);
  const MixingPair mp = with_correction(
      metropolis_weights(build_topology(TopologyKind::complete, 4)), 0.5);
  const SolverConfig cfg = pca_config();
  const std::vector<Matrix> x0(4, canonical_orthonormal(8, 3));
  StackedState st = dprgd_init(p, mp, cfg, x0);
  for (int k = 0; k < 10; ++k) {
    dprgd_step(st, p, mp, cfg);
    for (const Matrix& x : st.X) {
      CHECK((x - x0[0]).norm() <= 1e-13);
      CHECK(gram_residual(x).norm() <= 1e-10);
    }
  }
}

TEST_CASE("dprgd single agent equals retracted gradient descent") {
  const PcaProblem p = small_pca(1);
  const MixingPair mp = single_agent_pair();
  const SolverConfig cfg = pca_config();
  StackedState st = dprgd_init(p, mp, cfg, replicated_orthonormal_init(p, 25));
  Matrix x = st.X[0];
  for (int k = 0; k < 10; ++k) {
    dprgd_step(st, p, mp, cfg);
    x = polar_orthonormalize(
        x - cfg.alpha * riemannian_gradient(p.local_gradient_fn(0), x));
    CHECK((st.X[0] - x).norm() <= 1e-12);
  }
}

TEST_CASE("rextra analogue: symmetry, stationarity, feasibility") {
  // identical agents stay identical
  PcaProblem p1 = small_pca(1);
  PcaProblem shared;
  shared.n = 4;
  shared.d = p1.d;
  shared.r = p1.r;
  shared.blocks = std::vector<Matrix>(4, p1.blocks[0]);
  shared.rebuild_gram_cache();
  const MixingPair mp = with_correction(
      metropolis_weights(build_topology(TopologyKind::complete, 4)), 0.5);
  const SolverConfig cfg = pca_config();
  StackedState st =
      rextra_style_init(shared, mp, cfg, replicated_orthonormal_init(shared, 27));
  for (int k = 0; k < 10; ++k) {
    rextra_style_step(st, shared, mp, cfg);
    for (int i = 1; i < 4; ++i) CHECK((st.X[i] - st.X[0]).norm() == 0.0);
    for (const Matrix& x : st.X) CHECK(gram_residual(x).norm() <= 1e-10);
  }

  // single agent at a stationary block barely moves
  const PcaProblem q = small_pca(1);
  const MixingPair one = single_agent_pair();
  StackedState sq = rextra_style_init(q, one, cfg, {*q.reference()});
  for (int k = 0; k < 100; ++k) rextra_style_step(sq, q, one, cfg);
  CHECK(procrustes_distance(sq.X[0], *q.reference()) <= 1e-8);
}

TEST_CASE("rf extra drives the default instance to stationarity") {
  const PcaProblem p = generate_synthetic_pca(8, 1000, 10, 5, 0.8, 1);
  const MixingPair mp = with_correction(
      metropolis_weights(build_topology(TopologyKind::erdos_renyi, 8, 0.6, 7)), 0.5);
  SolverConfig cfg;
  cfg.alpha = 0.08 / 1000.0;
  cfg.beta = 10.0;
  StackedState st =
      rf_extra_init(p, mp, cfg, replicated_orthonormal_init(p, mix_seed(1, 0xA11CE)));
  double stat = 1.0;
  for (int k = 0; k < 20000 && stat >= 1e-6; ++k) {
    rf_extra_step(st, p, mp, cfg);
    stat = riemannian_gradient(p.global_gradient_fn(),
                               polar_orthonormalize(average_iterate(st)))
               .norm();
  }
  CHECK(stat < 1e-6);
}
