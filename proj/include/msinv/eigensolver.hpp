#pragma once

#include "msinv/types.hpp"

namespace msinv {

// Solution of the symmetric generalized problem A v = lambda S v with S SPD.
// Eigenvalues ascend; eigenvectors are the columns of `vectors`, normalised
// so that vectors^T S vectors = I, each signed so that its largest-magnitude
// component is positive (ties resolved toward the lowest index).
struct EigenSolution {
  Vector values;
  Matrix vectors;
};

// Dense generalized symmetric eigensolver: Cholesky-whitens the pencil and
// diagonalises with cyclic Jacobi sweeps, which are unconditionally stable
// and give reproducible results independent of any external LAPACK.
//
// When S fails to factor, a small diagonal shift (1e-14 * max diagonal,
// escalated twice by 100x) is retried before giving up. Throws SpectralError
// when S cannot be regularised or the sweeps fail to converge, and
// InvalidArgument on shape mismatches.
EigenSolution generalized_selfadjoint_eigen(const Matrix& a, const Matrix& s);

} // namespace msinv
