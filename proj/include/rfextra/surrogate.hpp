#pragma once

#include <functional>

#include "rfextra/matops.hpp"

namespace rfextra {

/// Callable contract for a local Euclidean gradient X ↦ ∇f_i(X).
/// Implementations must be deterministic: equal inputs, equal outputs.
using LocalGradient = std::function<Matrix(const Matrix&)>;

struct SurrogateParams {
  double beta = 1.0;  // orthogonality penalty weight, > 0
};

/// b(X) = ¼‖XᵀX − I‖²_F.
double penalty_value(const Matrix& x);

/// ∇b(X) = X(XᵀX − I).
Matrix penalty_gradient(const Matrix& x);

/// Approximate gradient mapping
///   G(X) = ∇f(XXᵀX)·(3I − XᵀX)/2 − X·sym(Xᵀ∇f(XXᵀX)),
/// built from a single gradient evaluation at the projected point XXᵀX.
Matrix approx_grad_G(const LocalGradient& gradf, const Matrix& x);

/// Retraction-free search direction H(X) = G(X) + β·X(XᵀX − I), fused so the
/// gradient is still evaluated exactly once.
Matrix surrogate_H(const LocalGradient& gradf, const Matrix& x,
                   const SurrogateParams& params);

/// Tangent-space projection ∇f(X) − X·sym(Xᵀ∇f(X)) at a feasible point.
/// Requires ‖XᵀX − I‖_F ≤ 1e-8; callers project first.
Matrix riemannian_gradient(const LocalGradient& gradf, const Matrix& x);

}  // namespace rfextra
