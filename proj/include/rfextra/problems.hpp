#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rfextra/matops.hpp"
#include "rfextra/surrogate.hpp"

namespace rfextra {

/// A family of local objectives f_i over a shared d×r variable. Problems are
/// immutable after construction; gradient calls are pure and reentrant.
class Problem {
 public:
  virtual ~Problem() = default;

  virtual int agents() const = 0;
  virtual int ambient_rows() const = 0;  // d
  virtual int rank() const = 0;          // r

  virtual double local_value(int agent, const Matrix& x) const = 0;
  virtual Matrix local_gradient(int agent, const Matrix& x) const = 0;

  /// Orthonormal reference solution, when the instance has a meaningful one.
  virtual const Matrix* reference() const { return nullptr; }

  /// Per-problem step resolution: α = β̂ / alpha_denominator().
  virtual double alpha_denominator() const = 0;

  /// Global objective f = (1/n) Σ f_i and its gradient.
  double global_value(const Matrix& x) const;
  virtual Matrix global_gradient(const Matrix& x) const;

  LocalGradient local_gradient_fn(int agent) const;
  LocalGradient global_gradient_fn() const;
};

/// Decentralized PCA: f_i(X) = −½ tr(Xᵀ AᵢᵀAᵢ X).
class PcaProblem final : public Problem {
 public:
  int n = 0, d = 0, r = 0;
  std::vector<Matrix> blocks;   // A_i, m_i × d
  std::vector<Matrix> gram;     // AᵢᵀAᵢ, cached
  Matrix pooled_gram;           // Σ AᵢᵀAᵢ
  std::optional<Matrix> ref;    // d×r, orthonormal
  double alpha_den = 1.0;

  int agents() const override { return n; }
  int ambient_rows() const override { return d; }
  int rank() const override { return r; }
  double local_value(int agent, const Matrix& x) const override;
  Matrix local_gradient(int agent, const Matrix& x) const override;
  Matrix global_gradient(const Matrix& x) const override;
  const Matrix* reference() const override { return ref ? &*ref : nullptr; }
  double alpha_denominator() const override { return alpha_den; }

  /// Fills gram/pooled_gram from blocks.
  void rebuild_gram_cache();
};

/// Synthetic instance: a gaussian B ∈ ℝ^{(n·m)×d} is factored as B = UΣVᵀ and
/// reassembled as A = U Σ̃ Vᵀ with the spectrum damped geometrically,
/// Σ̃_j = Σ_j ξʲ, so A keeps the gaussian scale but decays with ratio ξ. Rows
/// are partitioned evenly across agents; the first r columns of V are the
/// reference solution. Step resolution α = β̂·n/Σmᵢ = β̂/m_per_agent.
PcaProblem generate_synthetic_pca(int n, int m_per_agent, int d, int r,
                                  double xi, std::uint64_t seed);

/// IDX image container (unsigned-byte pixels, big-endian headers on disk).
struct IdxImages {
  std::uint32_t count = 0, rows = 0, cols = 0;
  std::vector<std::uint8_t> pixels;  // count·rows·cols bytes
};

IdxImages read_idx_images(const std::string& path);
void write_idx_images(const std::string& path, const IdxImages& img);

/// MNIST-style PCA: pixels scaled by 1/255, rows shuffled by seed and split
/// into n equal blocks; reference from a dense eigensolve of the pooled Gram
/// matrix. Step resolution α = β̂ / sample_count.
PcaProblem load_mnist_pca(const std::string& images_path, int n, int r,
                          std::uint64_t seed);

/// Decentralized low-rank matrix completion over column blocks:
///   f_i(X) = ½‖P_Ωᵢ ⊙ (X Vᵢ(X) − Aᵢ)‖²_F,
/// where Vᵢ(X) is the per-column ridge least-squares factor.
class LrmcProblem final : public Problem {
 public:
  int n = 0, d = 0, r = 0, T = 0;
  std::vector<Matrix> blocks;  // A_i, d × T_i
  std::vector<Matrix> masks;   // 0/1 entries, same shapes
  double ridge = 1e-10;
  double mask_rate = 0.0;  // realized sampling rate μ

  int agents() const override { return n; }
  int ambient_rows() const override { return d; }
  int rank() const override { return r; }
  double local_value(int agent, const Matrix& x) const override;
  Matrix local_gradient(int agent, const Matrix& x) const override;
  double alpha_denominator() const override { return 1.0 / n; }  // α = β̂·n

  /// Least-squares factor: column t solves (XωᵀXω + ridge·I) v = Xωᵀ aω over
  /// the observed rows ω; unobserved columns get v = 0.
  Matrix local_factor(int agent, const Matrix& x) const;
};

/// Gaussian factors L (d×r), R (r×T) and noise E: A = LR + noise·E, observed
/// with an i.i.d. Bernoulli mask of rate μ = r(d+T−r)/(dT) unless overridden.
/// Columns are partitioned contiguously into n blocks (T divisible by n).
LrmcProblem generate_lrmc(int n, int d, int r, int T, double noise,
                          std::uint64_t seed, double ridge = 1e-10,
                          double mask_rate_override = -1.0);

}  // namespace rfextra
