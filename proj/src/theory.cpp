#include "rfextra/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "rfextra/rng.hpp"
#include "rfextra/solvers.hpp"
#include "rfextra/surrogate.hpp"

namespace rfextra {

double RegionSampler::norm_cap() const { return std::sqrt(7.0 * r / 6.0) + 1.0; }

namespace {

// Bisection on the perturbation scale so that ‖(Z+εN)ᵀ(Z+εN) − I‖_F lands at
// frac·cap from below.
Matrix region_point(Rng& rng, int d, int r, double cap, double frac) {
  const Matrix z = random_orthonormal(rng, d, r);
  const Matrix n = rng.gaussian_matrix(d, r);
  const double target = frac * cap;
  if (target <= 0.0) return z;
  auto residual = [&](double eps) { return gram_residual(z + eps * n).norm(); };
  double hi = 1.0;
  int guard = 0;
  while (residual(hi) < target && guard++ < 200) hi *= 2.0;
  double lo = 0.0;
  for (int it = 0; it < 100; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (residual(mid) > target)
      hi = mid;
    else
      lo = mid;
  }
  return z + lo * n;
}

Matrix bounded_point(Rng& rng, int d, int r, double cap) {
  Matrix g = rng.gaussian_matrix(d, r);
  const double frac = 0.05 + 0.95 * rng.uniform();
  const double norm = g.norm();
  if (norm > 0.0) g *= frac * cap / norm;
  return g;
}

// Exact gradient of the ambient surrogate potential for the averaged
// objective; costs two gradient evaluations and is used only for diagnostics.
Matrix exact_grad_g(const Problem& problem, const Matrix& x) {
  const Matrix xtx = x.transpose() * x;
  const Matrix gx = problem.global_gradient(x);
  const Matrix gy = problem.global_gradient(x * xtx);
  return 1.5 * gx - 0.5 * gy * xtx - x * sym(x.transpose() * gy);
}

RateReport fit_decay(const std::vector<double>& squared, int k_min, int k_max) {
  if (k_min < 10 || k_max < 10 * k_min)
    throw std::invalid_argument("rate check: need k_max >= 10*k_min >= 100");
  if (static_cast<int>(squared.size()) <= k_max)
    throw std::invalid_argument("rate check: trace shorter than k_max");

  std::vector<double> prefix(squared.size());
  double running = 0.0;
  for (std::size_t k = 0; k < squared.size(); ++k) {
    running += squared[k];
    prefix[k] = running / static_cast<double>(k + 1);
  }

  constexpr int kGridPoints = 25;
  std::vector<int> grid;
  for (int g = 0; g < kGridPoints; ++g) {
    const double t = static_cast<double>(g) / (kGridPoints - 1);
    const int k = static_cast<int>(std::lround(
        std::exp(std::log(double(k_min)) +
                 t * (std::log(double(k_max)) - std::log(double(k_min))))));
    if (grid.empty() || k > grid.back()) grid.push_back(k);
  }

  RateReport rep;
  rep.grid_points = static_cast<int>(grid.size());
  double smax = 0.0;
  for (int k : grid) smax = std::max(smax, prefix[k]);
  if (smax < 1e-290) {  // identically converged series: vacuous pass
    rep.pass = true;
    return rep;
  }

  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int k : grid) {
    const double x = std::log(double(k));
    const double y = std::log(std::max(prefix[k], 1e-300));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double m = static_cast<double>(grid.size());
  rep.slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  rep.pass = rep.slope <= -0.8;
  return rep;
}

}  // namespace

std::vector<Matrix> sample_region_R(const RegionSampler& sampler, int count) {
  if (count < 1) throw std::invalid_argument("sample_region_R: count must be >= 1");
  Rng rng(sampler.seed);
  std::vector<Matrix> out;
  out.reserve(count);
  for (int t = 0; t < count; ++t) {
    const double u = rng.uniform();
    double frac = u;
    if (t == 0) frac = 0.0;                       // exactly orthonormal
    else if (t % 4 == 3) frac = 0.92 + 0.065 * u; // boundary-adjacent
    Matrix x = region_point(rng, sampler.d, sampler.r, sampler.feasibility_cap, frac);
    if (gram_residual(x).norm() > sampler.feasibility_cap)
      throw std::runtime_error("sample_region_R: sample left the region");
    out.push_back(std::move(x));
  }
  return out;
}

std::vector<Matrix> sample_region_B(const RegionSampler& sampler, int count) {
  if (count < 1) throw std::invalid_argument("sample_region_B: count must be >= 1");
  Rng rng(sampler.seed);
  std::vector<Matrix> out;
  out.reserve(count);
  for (int t = 0; t < count; ++t)
    out.push_back(bounded_point(rng, sampler.d, sampler.r, sampler.norm_cap()));
  return out;
}

CoercivityReport check_coercivity(const Problem& problem,
                                  const SurrogateParams& params,
                                  const std::vector<Matrix>& samples,
                                  double c0_hat) {
  if (params.beta < (6.0 + 21.0 * c0_hat) / 5.0)
    throw std::invalid_argument("check_coercivity: beta below (6 + 21*C0)/5");
  CoercivityReport rep;
  rep.samples = static_cast<int>(samples.size());
  rep.worst_margin = std::numeric_limits<double>::infinity();
  const LocalGradient gfn = problem.global_gradient_fn();
  for (const Matrix& x : samples) {
    const Matrix h = surrogate_H(gfn, x, params);
    const Matrix g = approx_grad_G(gfn, x);
    const double lhs = h.squaredNorm();
    const double rhs = g.squaredNorm() + params.beta * gram_residual(x).squaredNorm();
    rep.worst_margin = std::min(rep.worst_margin, lhs - rhs);
    if (lhs < rhs - 1e-10 * (1.0 + rhs)) ++rep.violations;
  }
  return rep;
}

SpectrumReport check_transition_spectrum(const MixingPair& mp) {
  SpectrumReport rep;
  const Matrix p = build_joint_transition(mp);
  rep.rho_P = spectral_radius(p);
  rep.spectral_pass = rep.rho_P < 1.0;

  const int n = mp.n();
  Rng rng(0x5eedULL);
  double worst = 0.0;
  for (int trial = 0; trial < 4; ++trial) {
    Vector u(n);
    for (int i = 0; i < n; ++i) u(i) = rng.gaussian();
    u.array() -= u.mean();
    Vector z = Vector::Zero(2 * n);
    z.tail(n) = u;
    const double ratio = (p * z).norm() / u.norm();
    worst = std::max(worst, std::abs(ratio - std::numbers::sqrt2));
  }
  rep.witness_ratio_error = worst;
  rep.witness_pass = worst <= 1e-10;

  Matrix pk = Matrix::Identity(2 * n, 2 * n);
  for (int k = 0; k < 200; ++k) pk = p * pk;
  rep.power_decay_pass = std::pow(pk.norm(), 1.0 / 200.0) <= rep.rho_P + 0.05;
  return rep;
}

TheoryConstants estimate_constants(const Problem& problem,
                                   const RegionSampler& sampler, int pair_count,
                                   const MixingPair* mp) {
  if (pair_count < 100)
    throw std::invalid_argument("estimate_constants: need pair_count >= 100");
  if (sampler.d != problem.ambient_rows() || sampler.r != problem.rank())
    throw std::invalid_argument("estimate_constants: sampler shape mismatch");

  const int n = problem.agents();
  const int d = sampler.d, r = sampler.r;
  const double cap_b = sampler.norm_cap();
  Rng rng(sampler.seed);

  TheoryConstants c;
  struct Parts {
    double a2, ab, b2;  // ‖u‖², ⟨u, v⟩, ‖v‖² for u + β v at a later β
  };
  std::vector<Parts> h_parts;          // per (sample, agent): G_i and ∇b
  h_parts.reserve(std::size_t(pair_count) * n);
  std::vector<Parts> lh_parts;         // per pair: Δ(∇g) and Δ(∇b)
  std::vector<double> lh_dx;
  lh_parts.reserve(pair_count);
  lh_dx.reserve(pair_count);

  for (int t = 0; t < pair_count; ++t) {
    // fixed draw order per iteration, so a larger pair_count extends the
    // stream instead of reshuffling it
    const Matrix x1 = bounded_point(rng, d, r, cap_b);
    const Matrix x2 = bounded_point(rng, d, r, cap_b);
    const bool through1 = rng.uniform() < 0.5;
    const bool through2 = rng.uniform() < 0.5;
    const double frac = rng.uniform();
    const Matrix xr = region_point(rng, d, r, sampler.feasibility_cap, frac);

    const double dx = (x1 - x2).norm();
    if (dx > 0.0) {
      const Matrix p1 = through1 ? Matrix(x1 * (x1.transpose() * x1)) : x1;
      const Matrix p2 = through2 ? Matrix(x2 * (x2.transpose() * x2)) : x2;
      const double dp = (p1 - p2).norm();
      if (dp > 0.0)
        for (int i = 0; i < n; ++i)
          c.L_f = std::max(c.L_f, (problem.local_gradient(i, p1) -
                                   problem.local_gradient(i, p2)).norm() / dp);
      for (int i = 0; i < n; ++i) {
        const LocalGradient fi = problem.local_gradient_fn(i);
        c.L_g = std::max(c.L_g, (approx_grad_G(fi, x1) - approx_grad_G(fi, x2)).norm() / dx);
      }
      const Matrix db = penalty_gradient(x1) - penalty_gradient(x2);
      c.L_b = std::max(c.L_b, db.norm() / dx);
      const Matrix dg = exact_grad_g(problem, x1) - exact_grad_g(problem, x2);
      lh_parts.push_back({dg.squaredNorm(), dg.cwiseProduct(db).sum(), db.squaredNorm()});
      lh_dx.push_back(dx);
    }

    const Matrix db_r = penalty_gradient(xr);
    const double db2 = db_r.squaredNorm();
    const Matrix cubic = xr * (xr.transpose() * xr);
    for (int i = 0; i < n; ++i) {
      const Matrix gi = approx_grad_G(problem.local_gradient_fn(i), xr);
      c.M_g = std::max(c.M_g, gi.norm());
      c.C0 = std::max(c.C0, problem.local_gradient(i, cubic).norm());
      h_parts.push_back({gi.squaredNorm(), gi.cwiseProduct(db_r).sum(), db2});
    }
  }

  c.beta_floor = std::max({56.0 * c.L_f * c.L_f, (6.0 + 21.0 * c.C0) / 5.0,
                           12.0 * std::numbers::sqrt2 * (c.M_g + 1.0)});
  c.L_H = c.L_g + c.beta_floor * c.L_b;
  const double beta = c.beta_floor;
  for (const Parts& h : h_parts)
    c.M_H = std::max(c.M_H, std::sqrt(std::max(
                                0.0, h.a2 + 2.0 * beta * h.ab + beta * beta * h.b2)));
  for (std::size_t k = 0; k < lh_parts.size(); ++k) {
    const Parts& l = lh_parts[k];
    const double num = std::sqrt(
        std::max(0.0, l.a2 + 2.0 * beta * l.ab + beta * beta * l.b2));
    c.L_h = std::max(c.L_h, num / lh_dx[k]);
  }

  if (mp) {
    c.sigma2 = mp->sigma2;
    c.rho_P = spectral_radius(build_joint_transition(*mp));
  }
  return c;
}

RateReport check_rate(const std::vector<double>& h_values, int k_min, int k_max) {
  std::vector<double> squared(h_values.size());
  for (std::size_t k = 0; k < h_values.size(); ++k)
    squared[k] = h_values[k] * h_values[k];
  return fit_decay(squared, k_min, k_max);
}

RateReport check_feasibility_rate(const std::vector<double>& feasibility_values,
                                  int k_min, int k_max) {
  std::vector<double> squared(feasibility_values.size());
  for (std::size_t k = 0; k < feasibility_values.size(); ++k)
    squared[k] = feasibility_values[k] * feasibility_values[k];
  return fit_decay(squared, k_min, k_max);
}

// ---------------------------------------------------------------- default battery

namespace {

std::string fmt_metric(const char* key, double v) {
  std::ostringstream os;
  os << key << "=" << v;
  return os.str();
}

bool constants_finite(const TheoryConstants& c) {
  for (double v : {c.L_f, c.L_g, c.L_b, c.L_H, c.L_h, c.M_g, c.M_H, c.C0, c.beta_floor})
    if (!std::isfinite(v) || v < 0.0) return false;
  return true;
}

}  // namespace

std::vector<TheoryCheckLine> run_default_theory_checks(int region_samples,
                                                       int pair_count,
                                                       std::uint64_t seed) {
  std::vector<TheoryCheckLine> lines;

  const PcaProblem pca = generate_synthetic_pca(8, 1000, 10, 5, 0.8, 1);
  RegionSampler rs_pca;
  rs_pca.d = pca.d;
  rs_pca.r = pca.r;
  rs_pca.seed = seed;
  const TheoryConstants cpca = estimate_constants(pca, rs_pca, pair_count);
  {
    const double cap = rs_pca.norm_cap();
    const double lb_bound = 3.0 * cap * cap + 1.0;
    Eigen::SelfAdjointEigenSolver<Matrix> es(pca.pooled_gram / pca.n);
    const double exact_lf = es.eigenvalues().maxCoeff();
    const bool ok = constants_finite(cpca) && cpca.L_b <= lb_bound &&
                    cpca.L_f <= 1.3 * exact_lf;
    std::ostringstream os;
    os << "L_f=" << cpca.L_f << " exact_gram_norm=" << exact_lf
       << " L_b=" << cpca.L_b << " L_b_bound=" << lb_bound
       << " beta_floor=" << cpca.beta_floor;
    lines.push_back({"constants_pca", ok, os.str()});
  }
  {
    const auto samples = sample_region_R(rs_pca, region_samples);
    const auto rep = check_coercivity(pca, SurrogateParams{cpca.beta_floor},
                                      samples, cpca.C0);
    std::ostringstream os;
    os << "violations=" << rep.violations << "/" << rep.samples
       << " worst_margin=" << rep.worst_margin << " beta=" << cpca.beta_floor;
    lines.push_back({"coercivity_pca", rep.violations == 0, os.str()});
  }

  const LrmcProblem lrmc = generate_lrmc(8, 100, 5, 1000, 1e-3, 1);
  RegionSampler rs_lrmc;
  rs_lrmc.d = lrmc.d;
  rs_lrmc.r = lrmc.r;
  rs_lrmc.seed = mix_seed(seed, 1);
  const TheoryConstants clrmc = estimate_constants(lrmc, rs_lrmc, pair_count);
  {
    const double cap = rs_lrmc.norm_cap();
    const bool ok = constants_finite(clrmc) && clrmc.L_b <= 3.0 * cap * cap + 1.0;
    std::ostringstream os;
    os << "L_f=" << clrmc.L_f << " M_g=" << clrmc.M_g
       << " beta_floor=" << clrmc.beta_floor;
    lines.push_back({"constants_lrmc", ok, os.str()});
  }
  {
    const auto samples = sample_region_R(rs_lrmc, region_samples);
    const auto rep = check_coercivity(lrmc, SurrogateParams{clrmc.beta_floor},
                                      samples, clrmc.C0);
    std::ostringstream os;
    os << "violations=" << rep.violations << "/" << rep.samples
       << " worst_margin=" << rep.worst_margin << " beta=" << clrmc.beta_floor;
    lines.push_back({"coercivity_lrmc", rep.violations == 0, os.str()});
  }

  {
    const TopologyKind kinds[] = {TopologyKind::ring, TopologyKind::star,
                                  TopologyKind::complete, TopologyKind::erdos_renyi,
                                  TopologyKind::erdos_renyi, TopologyKind::erdos_renyi};
    const double ps[] = {0.0, 0.0, 0.0, 0.4, 0.6, 0.8};
    const int ns[] = {4, 8, 16};
    const double thetas[] = {0.1, 0.25, 0.5};
    bool all = true;
    double rho_min = 2.0, rho_max = 0.0;
    int combos = 0;
    for (int k = 0; k < 6; ++k)
      for (int in = 0; in < 3; ++in)
        for (int it = 0; it < 3; ++it) {
          const Topology topo = build_topology(kinds[k], ns[in], ps[k],
                                               mix_seed(0xE5, combos));
          const MixingPair mp = with_correction(metropolis_weights(topo), thetas[it]);
          const double rho = spectral_radius(build_joint_transition(mp));
          all = all && rho < 1.0 && mp.sigma2 < 1.0;
          rho_min = std::min(rho_min, rho);
          rho_max = std::max(rho_max, rho);
          ++combos;
        }
    std::ostringstream os;
    os << "combos=" << combos << " rho_min=" << rho_min << " rho_max=" << rho_max;
    lines.push_back({"spectrum_sweep", all, os.str()});
  }
  {
    const Topology topo = build_topology(TopologyKind::ring, 4);
    const auto rep = check_transition_spectrum(with_correction(metropolis_weights(topo), 0.5));
    std::ostringstream os;
    os << "witness_error=" << rep.witness_ratio_error << " rho=" << rep.rho_P
       << " power_decay=" << (rep.power_decay_pass ? "ok" : "bad");
    lines.push_back({"frobenius_witness",
                     rep.witness_pass && rep.spectral_pass && rep.power_decay_pass,
                     os.str()});
  }

  {
    // fixed-budget run for the ergodic decay fits
    const Topology topo = build_topology(TopologyKind::erdos_renyi, 8, 0.6, 7);
    const MixingPair mp = with_correction(metropolis_weights(topo), 0.5);
    SolverConfig cfg;
    cfg.alpha = 0.08 / pca.alpha_denominator();
    cfg.beta = 10.0;
    const int budget = 5000;
    StackedState st = rf_extra_init(pca, mp, cfg,
                                    replicated_orthonormal_init(pca, mix_seed(1, 0xA11CE)));
    std::vector<double> h_series, feas_series;
    h_series.reserve(budget + 1);
    const LocalGradient gfn = pca.global_gradient_fn();
    for (int k = 0; k <= budget; ++k) {
      const Matrix xbar = average_iterate(st);
      h_series.push_back(surrogate_H(gfn, xbar, SurrogateParams{cfg.beta}).norm());
      feas_series.push_back(gram_residual(xbar).norm());
      if (k < budget) rf_extra_step(st, pca, mp, cfg);
    }
    const RateReport hr = check_rate(h_series, 500, 5000);
    const RateReport fr = check_feasibility_rate(feas_series, 500, 5000);
    lines.push_back({"rate_stationarity", hr.pass, fmt_metric("slope", hr.slope)});
    lines.push_back({"rate_feasibility", fr.pass, fmt_metric("slope", fr.slope)});
  }

  return lines;
}

}  // namespace rfextra
