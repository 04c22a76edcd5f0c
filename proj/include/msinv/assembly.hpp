#pragma once

#include <map>
#include <span>
#include <vector>

#include <Eigen/SparseCholesky>

#include "msinv/geometry.hpp"
#include "msinv/types.hpp"

namespace msinv {

// Physical and discretisation parameters shared by assembly and time
// stepping. Conductivities are isotropic; fractures carry no storage term.
struct AssemblyParams {
  Real k_m = 1e-3; // background conductivity
  Real k_f = 1e2;  // fracture conductivity
  Real c_m = 1.0;  // storage coefficient
  Real f = 0.0;    // constant volumetric source
  Real p0 = 1.0;   // initial pressure value
  Real T = 10.0;   // final time
  int n_t = 10;    // number of implicit time steps

  Real dt() const { return T / n_t; }
  void validate() const; // throws InvalidArgument
};

// Sparse symmetric matrix with both triangles stored; mirrored entries are
// bit-identical by construction (see SymmetricAssembler).
class SparseSymMatrix {
public:
  SparseSymMatrix() = default;
  explicit SparseSymMatrix(SparseMatrix m) : m_(std::move(m)) {}

  Index dimension() const { return m_.rows(); }
  Index non_zeros() const { return m_.nonZeros(); }
  const SparseMatrix& matrix() const { return m_; }
  Real coeff(Index i, Index j) const { return m_.coeff(i, j); }
  Vector apply(const Vector& x) const { return m_ * x; }
  Matrix dense() const { return Matrix(m_); }

private:
  SparseMatrix m_;
};

// Accumulates element contributions for unordered index pairs and emits a
// mirrored compressed matrix. Entries that cancel exactly are dropped, so
// the sparsity pattern is deterministic and reproducible.
class SymmetricAssembler {
public:
  explicit SymmetricAssembler(Index dim) : dim_(dim) {}

  void add(Index i, Index j, Real value);
  SparseSymMatrix finalize() const;
  Index dimension() const { return dim_; }

private:
  Index dim_;
  std::map<std::pair<Index, Index>, Real> entries_; // key (min, max)
};

enum class BoundaryHandling { none, eliminate_dirichlet };

// P1 stiffness for div(k grad .) with k = k_m on triangles plus, for every
// fracture edge, the k_f-weighted two-point term (k_f/len)[[1,-1],[-1,1]].
SparseSymMatrix assemble_stiffness(
    const FineMesh& mesh, const AssemblyParams& params,
    BoundaryHandling bc = BoundaryHandling::eliminate_dirichlet);

// Consistent P1 mass with density c_m. Fractures have zero width and do not
// contribute. Never Dirichlet-reduced here; use eliminate_dirichlet.
SparseSymMatrix assemble_mass(const FineMesh& mesh,
                              const AssemblyParams& params);

// Right-hand side (f, phi_i) for a constant source density: each triangle
// spreads f * area / 3 onto its corners. Fractures carry no source.
Vector assemble_load(const FineMesh& mesh, Real f);

// Symmetric elimination: zero the rows and columns of the given dofs and put
// a unit diagonal there. Preserves symmetry bit-exactly.
SparseSymMatrix eliminate_dirichlet(const SparseSymMatrix& m,
                                    std::span<const int> dofs);

// Jacobi-preconditioned conjugate gradients for SPD systems. Converges when
// ||b - Ax|| <= tol * ||b||; throws SolverError (quoting the final residual)
// when the iteration cap is hit, and on zero or negative diagonal entries.
Vector solve_spd(const SparseSymMatrix& a, const Vector& b, Real tol = 1e-10,
                 Index max_iter = 0 /* 0 = automatic */);

// Cached Cholesky factorisation for repeated solves against one operator.
// compute() throws SolverError when the matrix is not SPD; try_compute()
// reports failure instead, which is how step rejection is detected.
class SparseCholesky {
public:
  void compute(const SparseSymMatrix& m);
  bool try_compute(const SparseSymMatrix& m);
  Vector solve(const Vector& rhs) const;

private:
  Eigen::SimplicialLLT<SparseMatrix> llt_;
  bool ok_ = false;
};

namespace detail {

// k-weighted P1 stiffness of one triangle; throws AssemblyError when the
// signed area is not positive.
Eigen::Matrix3d local_stiffness(const Vector2& p0, const Vector2& p1,
                                const Vector2& p2, Real k);

// rho-weighted consistent P1 mass of one triangle.
Eigen::Matrix3d local_mass(const Vector2& p0, const Vector2& p1,
                           const Vector2& p2, Real rho);

// Scatter triangle stiffness (k = k_m) and fracture edge terms for a subset
// of the mesh into an assembler over the full fine index space.
void add_stiffness(SymmetricAssembler& out, const FineMesh& mesh,
                   std::span<const int> triangles,
                   std::span<const FractureEdge> fracture_edges, Real k_m,
                   Real k_f);

void add_mass(SymmetricAssembler& out, const FineMesh& mesh,
              std::span<const int> triangles, Real c_m);

} // namespace detail

} // namespace msinv
