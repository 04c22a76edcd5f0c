#include "msinv/assembly.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "msinv/errors.hpp"

namespace msinv {

void AssemblyParams::validate() const {
  if (!(k_m > 0) || !(k_f > 0))
    throw InvalidArgument("AssemblyParams: conductivities must be positive");
  if (!(c_m > 0))
    throw InvalidArgument("AssemblyParams: storage coefficient must be positive");
  if (!(T > 0) || n_t < 1)
    throw InvalidArgument("AssemblyParams: need T > 0 and n_t >= 1");
}

void SymmetricAssembler::add(Index i, Index j, Real value) {
  if (i < 0 || i >= dim_ || j < 0 || j >= dim_)
    throw InvalidArgument("SymmetricAssembler: index out of range");
  entries_[{std::min(i, j), std::max(i, j)}] += value;
}

SparseSymMatrix SymmetricAssembler::finalize() const {
  std::vector<Triplet> trip;
  trip.reserve(2 * entries_.size());
  for (const auto& [key, v] : entries_) {
    if (v == Real(0)) continue;
    trip.emplace_back(key.first, key.second, v);
    if (key.first != key.second) trip.emplace_back(key.second, key.first, v);
  }
  SparseMatrix m(dim_, dim_);
  m.setFromTriplets(trip.begin(), trip.end());
  m.makeCompressed();
  return SparseSymMatrix(std::move(m));
}

namespace detail {

Eigen::Matrix3d local_stiffness(const Vector2& p0, const Vector2& p1,
                                const Vector2& p2, Real k) {
  const Real area2 = (p1.x() - p0.x()) * (p2.y() - p0.y()) -
                     (p2.x() - p0.x()) * (p1.y() - p0.y());
  if (!(area2 > 0))
    throw AssemblyError("local_stiffness: non-positive triangle area");
  // Barycentric gradients: grad l_i = (b_i, c_i) / area2 with the usual
  // cyclic differences.
  const Real b[3] = {p1.y() - p2.y(), p2.y() - p0.y(), p0.y() - p1.y()};
  const Real c[3] = {p2.x() - p1.x(), p0.x() - p2.x(), p1.x() - p0.x()};
  Eigen::Matrix3d ke;
  const Real scale = k / (2 * area2);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) ke(i, j) = scale * (b[i] * b[j] + c[i] * c[j]);
  return ke;
}

Eigen::Matrix3d local_mass(const Vector2& p0, const Vector2& p1,
                           const Vector2& p2, Real rho) {
  const Real area2 = (p1.x() - p0.x()) * (p2.y() - p0.y()) -
                     (p2.x() - p0.x()) * (p1.y() - p0.y());
  if (!(area2 > 0))
    throw AssemblyError("local_mass: non-positive triangle area");
  Eigen::Matrix3d me;
  const Real w = rho * area2 / 24; // area/12
  me.setConstant(w);
  me.diagonal().setConstant(2 * w);
  return me;
}

void add_stiffness(SymmetricAssembler& out, const FineMesh& mesh,
                   std::span<const int> triangles,
                   std::span<const FractureEdge> fracture_edges, Real k_m,
                   Real k_f) {
  for (int t : triangles) {
    const auto& e = mesh.elements[t];
    const auto ke = local_stiffness(mesh.vertices[e[0]], mesh.vertices[e[1]],
                                    mesh.vertices[e[2]], k_m);
    for (int i = 0; i < 3; ++i)
      for (int j = i; j < 3; ++j) out.add(e[i], e[j], ke(i, j));
  }
  for (const auto& fe : fracture_edges) {
    const Real len = (mesh.vertices[fe.v1] - mesh.vertices[fe.v0]).norm();
    if (!(len > 0))
      throw AssemblyError("add_stiffness: zero-length fracture edge");
    const Real w = k_f / len;
    out.add(fe.v0, fe.v0, w);
    out.add(fe.v1, fe.v1, w);
    out.add(fe.v0, fe.v1, -w);
  }
}

void add_mass(SymmetricAssembler& out, const FineMesh& mesh,
              std::span<const int> triangles, Real c_m) {
  for (int t : triangles) {
    const auto& e = mesh.elements[t];
    const auto me = local_mass(mesh.vertices[e[0]], mesh.vertices[e[1]],
                               mesh.vertices[e[2]], c_m);
    for (int i = 0; i < 3; ++i)
      for (int j = i; j < 3; ++j) out.add(e[i], e[j], me(i, j));
  }
}

} // namespace detail

SparseSymMatrix assemble_stiffness(const FineMesh& mesh,
                                   const AssemblyParams& params,
                                   BoundaryHandling bc) {
  params.validate();
  SymmetricAssembler asmb(mesh.vertex_count());
  std::vector<int> all(mesh.element_count());
  std::iota(all.begin(), all.end(), 0);
  detail::add_stiffness(asmb, mesh, all, mesh.fracture_edges, params.k_m,
                        params.k_f);
  SparseSymMatrix a = asmb.finalize();
  if (bc == BoundaryHandling::eliminate_dirichlet)
    a = eliminate_dirichlet(a, mesh.dirichlet_vertices());
  return a;
}

SparseSymMatrix assemble_mass(const FineMesh& mesh,
                              const AssemblyParams& params) {
  params.validate();
  SymmetricAssembler asmb(mesh.vertex_count());
  std::vector<int> all(mesh.element_count());
  std::iota(all.begin(), all.end(), 0);
  detail::add_mass(asmb, mesh, all, params.c_m);
  return asmb.finalize();
}

Vector assemble_load(const FineMesh& mesh, Real f) {
  Vector b = Vector::Zero(mesh.vertex_count());
  if (f == 0) return b;
  for (const auto& e : mesh.elements) {
    const Vector2& p0 = mesh.vertices[e[0]];
    const Real area2 = (mesh.vertices[e[1]].x() - p0.x()) *
                           (mesh.vertices[e[2]].y() - p0.y()) -
                       (mesh.vertices[e[2]].x() - p0.x()) *
                           (mesh.vertices[e[1]].y() - p0.y());
    const Real w = f * area2 / 6; // f * area / 3
    for (int k = 0; k < 3; ++k) b[e[k]] += w;
  }
  return b;
}

SparseSymMatrix eliminate_dirichlet(const SparseSymMatrix& m,
                                    std::span<const int> dofs) {
  const Index n = m.dimension();
  std::vector<char> drop(n, 0);
  for (int d : dofs) {
    if (d < 0 || d >= n)
      throw InvalidArgument("eliminate_dirichlet: dof out of range");
    drop[d] = 1;
  }
  std::vector<Triplet> trip;
  trip.reserve(m.non_zeros() + dofs.size());
  const SparseMatrix& s = m.matrix();
  for (Index col = 0; col < s.outerSize(); ++col)
    for (SparseMatrix::InnerIterator it(s, col); it; ++it)
      if (!drop[it.row()] && !drop[it.col()])
        trip.emplace_back(it.row(), it.col(), it.value());
  for (Index d = 0; d < n; ++d)
    if (drop[d]) trip.emplace_back(d, d, Real(1));
  SparseMatrix out(n, n);
  out.setFromTriplets(trip.begin(), trip.end());
  out.makeCompressed();
  return SparseSymMatrix(std::move(out));
}

Vector solve_spd(const SparseSymMatrix& a, const Vector& b, Real tol,
                 Index max_iter) {
  const Index n = a.dimension();
  if (b.size() != n)
    throw InvalidArgument("solve_spd: dimension mismatch");
  const Real bnorm = b.norm();
  if (bnorm == 0) return Vector::Zero(n);
  if (max_iter <= 0) max_iter = 20 * n + 200;

  Vector dinv(n);
  for (Index i = 0; i < n; ++i) {
    const Real d = a.coeff(i, i);
    if (!(d > 0))
      throw SolverError("solve_spd: non-positive diagonal at index " +
                        std::to_string(i));
    dinv[i] = 1 / d;
  }

  Vector x = Vector::Zero(n);
  Vector r = b;
  Vector z = dinv.cwiseProduct(r);
  Vector p = z;
  Real rz = r.dot(z);
  for (Index it = 0; it < max_iter; ++it) {
    const Vector ap = a.apply(p);
    const Real pap = p.dot(ap);
    if (!(pap > 0))
      throw SolverError("solve_spd: operator is not positive definite");
    const Real alpha = rz / pap;
    x += alpha * p;
    r -= alpha * ap;
    if (r.norm() <= tol * bnorm) return x;
    z = dinv.cwiseProduct(r);
    const Real rz_next = r.dot(z);
    p = z + (rz_next / rz) * p;
    rz = rz_next;
  }
  throw SolverError("solve_spd: no convergence after " +
                    std::to_string(max_iter) + " iterations, residual " +
                    std::to_string(Vector(b - a.apply(x)).norm() / bnorm));
}

void SparseCholesky::compute(const SparseSymMatrix& m) {
  if (!try_compute(m))
    throw SolverError("SparseCholesky: factorisation failed; matrix not SPD");
}

bool SparseCholesky::try_compute(const SparseSymMatrix& m) {
  llt_.compute(m.matrix());
  ok_ = llt_.info() == Eigen::Success;
  return ok_;
}

Vector SparseCholesky::solve(const Vector& rhs) const {
  if (!ok_) throw SolverError("SparseCholesky: solve before valid compute");
  return llt_.solve(rhs);
}

} // namespace msinv
