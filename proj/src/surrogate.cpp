#include "rfextra/surrogate.hpp"

#include <stdexcept>

namespace rfextra {

double penalty_value(const Matrix& x) {
  return 0.25 * gram_residual(x).squaredNorm();
}

Matrix penalty_gradient(const Matrix& x) { return x * gram_residual(x); }

// Shared body for G and H. With q = XᵀX − I the two maps read
//   G = ∇f(X(q+I))·(I − q/2) − X·sym(Xᵀ∇f(·)),   H = G + β·Xq,
// and both cost one gradient evaluation.
static Matrix surrogate_core(const LocalGradient& gradf, const Matrix& x,
                             double beta) {
  const Matrix q = gram_residual(x);
  Matrix p = q;
  p.diagonal().array() += 1.0;  // XᵀX
  const Matrix grad_proj = gradf(x * p);
  Matrix scale = -0.5 * q;
  scale.diagonal().array() += 1.0;  // (3I − XᵀX)/2
  Matrix out = grad_proj * scale - x * sym(x.transpose() * grad_proj);
  if (beta != 0.0) out += beta * (x * q);
  return out;
}

Matrix approx_grad_G(const LocalGradient& gradf, const Matrix& x) {
  return surrogate_core(gradf, x, 0.0);
}

Matrix surrogate_H(const LocalGradient& gradf, const Matrix& x,
                   const SurrogateParams& params) {
  if (!(params.beta > 0.0))
    throw std::invalid_argument("surrogate_H: beta must be positive");
  return surrogate_core(gradf, x, params.beta);
}

Matrix riemannian_gradient(const LocalGradient& gradf, const Matrix& x) {
  if (gram_residual(x).norm() > 1e-8)
    throw std::invalid_argument(
        "riemannian_gradient: input does not have orthonormal columns");
  const Matrix g = gradf(x);
  return g - x * sym(x.transpose() * g);
}

}  // namespace rfextra
