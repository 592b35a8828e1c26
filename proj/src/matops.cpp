#include "rfextra/matops.hpp"

#include <stdexcept>

namespace rfextra {

Matrix sym(const Matrix& m) {
  if (m.rows() != m.cols())
    throw std::invalid_argument("sym: matrix must be square");
  return 0.5 * (m + m.transpose());
}

Matrix gram_residual(const Matrix& x) {
  if (x.rows() < x.cols())
    throw std::invalid_argument("gram_residual: need rows >= cols");
  const Eigen::Index r = x.cols();
  Matrix lower = Matrix::Zero(r, r);
  lower.selfadjointView<Eigen::Lower>().rankUpdate(x.transpose());
  Matrix q = lower.selfadjointView<Eigen::Lower>();  // mirror: exactly symmetric
  q.diagonal().array() -= 1.0;
  return q;
}

Matrix polar_orthonormalize(const Matrix& x) {
  if (x.rows() < x.cols())
    throw std::invalid_argument("polar_orthonormalize: need rows >= cols");
  Eigen::JacobiSVD<Matrix> svd(x, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& sv = svd.singularValues();
  if (sv(0) <= 0.0 || sv(sv.size() - 1) < 1e-12 * sv(0))
    throw std::runtime_error("polar_orthonormalize: rank-deficient input");
  return svd.matrixU() * svd.matrixV().transpose();
}

double procrustes_distance(const Matrix& x, const Matrix& y) {
  if (x.rows() != y.rows() || x.cols() != y.cols())
    throw std::invalid_argument("procrustes_distance: shape mismatch");
  const Matrix m = x.transpose() * y;
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Matrix q = svd.matrixU() * svd.matrixV().transpose();
  return (x * q - y).norm();
}

double second_largest_singular_value(const Matrix& w) {
  if (w.rows() != w.cols())
    throw std::invalid_argument("second_largest_singular_value: matrix must be square");
  if (w.rows() < 2) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(w);
  return svd.singularValues()(1);
}

double spectral_radius(const Matrix& a) {
  if (a.rows() != a.cols())
    throw std::invalid_argument("spectral_radius: matrix must be square");
  if (a.rows() == 0) return 0.0;
  Eigen::EigenSolver<Matrix> es(a, /*computeEigenvectors=*/false);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("spectral_radius: eigensolver did not converge");
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace rfextra
