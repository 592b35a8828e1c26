#pragma once

#include <Eigen/Dense>

namespace rfextra {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Symmetric part (M + Mᵀ)/2. Throws std::invalid_argument on non-square input.
Matrix sym(const Matrix& m);

/// Orthonormality residual Q(X) = XᵀX − I_r. Requires rows ≥ cols; the result
/// is exactly symmetric.
Matrix gram_residual(const Matrix& x);

/// Nearest matrix with orthonormal columns in Frobenius norm: the polar
/// factor UVᵀ of the thin SVD. Throws std::runtime_error when X is
/// numerically rank deficient (σ_min < 1e-12 σ_max).
Matrix polar_orthonormalize(const Matrix& x);

/// min over orthogonal Q of ‖XQ − Y‖_F, the subspace-invariant distance.
double procrustes_distance(const Matrix& x, const Matrix& y);

double second_largest_singular_value(const Matrix& w);

/// Largest eigenvalue modulus, computed through a real Schur decomposition.
double spectral_radius(const Matrix& a);

}  // namespace rfextra
