#include "msinv/eigensolver.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include <Eigen/Cholesky>

#include "msinv/errors.hpp"

namespace msinv {

namespace {

// One cyclic Jacobi pass over the strict upper triangle of the symmetric
// matrix b, accumulating rotations into v. Returns the largest off-diagonal
// magnitude seen before rotating.
Real jacobi_sweep(Matrix& b, Matrix& v) {
  const Index n = b.rows();
  Real off_max = 0;
  for (Index p = 0; p < n - 1; ++p)
    for (Index q = p + 1; q < n; ++q) {
      const Real bpq = b(p, q);
      off_max = std::max(off_max, std::abs(bpq));
      if (bpq == 0) continue;
      // Classical two-sided rotation choosing the smaller angle.
      const Real theta = (b(q, q) - b(p, p)) / (2 * bpq);
      const Real t = (theta >= 0 ? Real(1) : Real(-1)) /
                     (std::abs(theta) + std::sqrt(theta * theta + 1));
      const Real c = 1 / std::sqrt(t * t + 1);
      const Real s = t * c;
      for (Index k = 0; k < n; ++k) {
        const Real bkp = b(k, p), bkq = b(k, q);
        b(k, p) = c * bkp - s * bkq;
        b(k, q) = s * bkp + c * bkq;
      }
      for (Index k = 0; k < n; ++k) {
        const Real bpk = b(p, k), bqk = b(q, k);
        b(p, k) = c * bpk - s * bqk;
        b(q, k) = s * bpk + c * bqk;
      }
      for (Index k = 0; k < n; ++k) {
        const Real vkp = v(k, p), vkq = v(k, q);
        v(k, p) = c * vkp - s * vkq;
        v(k, q) = s * vkp + c * vkq;
      }
    }
  return off_max;
}

} // namespace

EigenSolution generalized_selfadjoint_eigen(const Matrix& a, const Matrix& s) {
  const Index n = a.rows();
  if (a.cols() != n || s.rows() != n || s.cols() != n)
    throw InvalidArgument("generalized_selfadjoint_eigen: shape mismatch");
  if (n == 0) return {Vector(0), Matrix(0, 0)};

  const Matrix asym = (a + a.transpose()) / 2;
  const Matrix ssym = (s + s.transpose()) / 2;

  // Factor S = L L^T, regularising a borderline-singular S by a tiny
  // diagonal shift before giving up.
  Eigen::LLT<Matrix> llt;
  Real shift = 0;
  {
    const Real sdmax = ssym.diagonal().cwiseAbs().maxCoeff();
    Real jitter = 1e-14 * (sdmax > 0 ? sdmax : Real(1));
    llt.compute(ssym);
    for (int attempt = 0; llt.info() != Eigen::Success && attempt < 3;
         ++attempt, jitter *= 100) {
      shift = jitter;
      llt.compute(ssym + shift * Matrix::Identity(n, n));
    }
    if (llt.info() != Eigen::Success)
      throw SpectralError(
          "generalized_selfadjoint_eigen: S is not positive definite");
  }

  // Whitened operator B = L^-1 A L^-T, kept symmetric explicitly.
  Matrix b = llt.matrixL().solve(asym);
  b = llt.matrixL().solve(Matrix(b.transpose()));
  b = ((b + b.transpose()) / 2).eval();

  Matrix v = Matrix::Identity(n, n);
  const Real scale = std::max(b.cwiseAbs().maxCoeff(), Real(1e-300));
  const Real tol = 1e-15 * scale;
  bool converged = false;
  for (int sweep = 0; sweep < 60; ++sweep) {
    if (jacobi_sweep(b, v) <= tol) {
      converged = true;
      break;
    }
  }
  if (!converged)
    throw SpectralError(
        "generalized_selfadjoint_eigen: Jacobi sweeps did not converge");

  // Back-substitute to pencil eigenvectors; V orthogonal makes them
  // S-orthonormal automatically.
  Matrix x = llt.matrixU().solve(v);

  std::vector<Index> order(n);
  std::iota(order.begin(), order.end(), Index(0));
  std::stable_sort(order.begin(), order.end(), [&](Index i, Index j) {
    return b(i, i) < b(j, j);
  });

  EigenSolution out;
  out.values.resize(n);
  out.vectors.resize(n, n);
  for (Index k = 0; k < n; ++k) {
    out.values[k] = b(order[k], order[k]);
    Vector col = x.col(order[k]);
    Index imax = 0;
    Real vmax = -1;
    for (Index i = 0; i < n; ++i)
      if (std::abs(col[i]) > vmax) {
        vmax = std::abs(col[i]);
        imax = i;
      }
    if (col[imax] < 0) col = -col;
    out.vectors.col(k) = col;
  }
  return out;
}

} // namespace msinv
