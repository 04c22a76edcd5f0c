#include "msinv/gmsfem.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include <Eigen/Cholesky>

#include "msinv/detail/io.hpp"
#include "msinv/eigensolver.hpp"
#include "msinv/errors.hpp"

namespace msinv {

namespace {

using EdgeKey = std::pair<int, int>;

EdgeKey edge_key(int a, int b) { return {std::min(a, b), std::max(a, b)}; }

// Local view of a triangle subset: sorted vertex list, global->local map and
// the indices of fracture edges lying on subset triangle edges.
struct LocalPatch {
  std::vector<int> tris;
  std::vector<int> verts;
  std::vector<int> local_of; // fine vertex -> local index or -1
  std::vector<int> fracture_ids;

  int local(int v) const { return local_of[static_cast<size_t>(v)]; }
  int size() const { return static_cast<int>(verts.size()); }
};

LocalPatch make_patch(const FineMesh& fine, std::vector<int> tris,
                      bool collect_fractures = true) {
  LocalPatch p;
  p.tris = std::move(tris);
  for (int t : p.tris)
    for (int v : fine.elements[static_cast<size_t>(t)]) p.verts.push_back(v);
  std::sort(p.verts.begin(), p.verts.end());
  p.verts.erase(std::unique(p.verts.begin(), p.verts.end()), p.verts.end());
  p.local_of.assign(fine.vertices.size(), -1);
  for (int i = 0; i < p.size(); ++i) p.local_of[p.verts[i]] = i;
  if (collect_fractures && !fine.fracture_edges.empty()) {
    std::set<EdgeKey> edges;
    for (int t : p.tris) {
      const auto& e = fine.elements[static_cast<size_t>(t)];
      for (int k = 0; k < 3; ++k)
        edges.insert(edge_key(e[k], e[(k + 1) % 3]));
    }
    for (size_t i = 0; i < fine.fracture_edges.size(); ++i) {
      const auto& fe = fine.fracture_edges[i];
      if (edges.count({fe.v0, fe.v1})) p.fracture_ids.push_back(static_cast<int>(i));
    }
  }
  return p;
}

// Dense conductivity operator of the patch: k_m triangles plus k_f fracture
// edge terms.
Matrix patch_stiffness(const FineMesh& fine, const LocalPatch& p, Real k_m,
                       Real k_f) {
  Matrix a = Matrix::Zero(p.size(), p.size());
  for (int t : p.tris) {
    const auto& e = fine.elements[static_cast<size_t>(t)];
    const auto ke = detail::local_stiffness(
        fine.vertices[e[0]], fine.vertices[e[1]], fine.vertices[e[2]], k_m);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) a(p.local(e[i]), p.local(e[j])) += ke(i, j);
  }
  for (int idx : p.fracture_ids) {
    const auto& fe = fine.fracture_edges[static_cast<size_t>(idx)];
    const Real len = (fine.vertices[fe.v1] - fine.vertices[fe.v0]).norm();
    const Real w = k_f / len;
    const int l0 = p.local(fe.v0), l1 = p.local(fe.v1);
    a(l0, l0) += w;
    a(l1, l1) += w;
    a(l0, l1) -= w;
    a(l1, l0) -= w;
  }
  return a;
}

// Dense c-weighted mass of the patch triangles (no fracture storage).
Matrix patch_mass(const FineMesh& fine, const LocalPatch& p, Real c_m) {
  Matrix m = Matrix::Zero(p.size(), p.size());
  for (int t : p.tris) {
    const auto& e = fine.elements[static_cast<size_t>(t)];
    const auto me = detail::local_mass(fine.vertices[e[0]], fine.vertices[e[1]],
                                       fine.vertices[e[2]], c_m);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) m(p.local(e[i]), p.local(e[j])) += me(i, j);
  }
  return m;
}

// Local vertex indices on the boundary of the patch (edges seen once).
std::vector<char> boundary_mask(const FineMesh& fine, const LocalPatch& p) {
  std::map<EdgeKey, int> count;
  for (int t : p.tris) {
    const auto& e = fine.elements[static_cast<size_t>(t)];
    for (int k = 0; k < 3; ++k) ++count[edge_key(e[k], e[(k + 1) % 3])];
  }
  std::vector<char> on_boundary(p.verts.size(), 0);
  for (const auto& [edge, c] : count)
    if (c == 1) {
      on_boundary[static_cast<size_t>(p.local(edge.first))] = 1;
      on_boundary[static_cast<size_t>(p.local(edge.second))] = 1;
    }
  return on_boundary;
}

// Barycentric value of coarse corner `corner` of coarse element K at a fine
// lattice vertex, computed from integer offsets so that neighbouring
// elements produce bit-identical values on shared edges.
Real hat_value(const FineMesh& fine, const CoarseMesh& coarse, int K,
               int corner, int v) {
  const int w = fine.nx + 1, r = fine.r;
  const int gx = v % w, gy = v / w;
  const int sq = K / 2, up = K % 2;
  const int cx = sq % coarse.n, cy = sq / coarse.n;
  const int fx = gx - cx * r, fy = gy - cy * r;
  int num = 0;
  if (up == 0) // corners v00, v10, v11
    num = corner == 0 ? r - fx : corner == 1 ? fx - fy : fy;
  else // corners v00, v11, v01
    num = corner == 0 ? r - fy : corner == 1 ? fx : fy - fx;
  return static_cast<Real>(num) / r;
}

struct EdgeTriangles {
  std::map<EdgeKey, std::pair<int, int>> tris; // up to two, -1 when absent

  void add(int a, int b, int t) {
    auto [it, fresh] = tris.try_emplace(edge_key(a, b), std::pair(t, -1));
    if (!fresh) it->second.second = t;
  }
};

EdgeTriangles build_edge_triangles(const FineMesh& fine) {
  EdgeTriangles et;
  for (int t = 0; t < fine.element_count(); ++t) {
    const auto& e = fine.elements[static_cast<size_t>(t)];
    for (int k = 0; k < 3; ++k) et.add(e[k], e[(k + 1) % 3], t);
  }
  return et;
}

} // namespace

namespace detail {

PartitionOfUnity build_partition_of_unity(const FineMesh& fine,
                                          const CoarseMesh& coarse,
                                          const AssemblyParams& params) {
  PartitionOfUnity pou;
  pou.chi.assign(coarse.vertices.size(), Vector::Zero(fine.vertex_count()));

  // chi restricted to each coarse element: hat values on its boundary,
  // discrete-harmonic extension (same conductivity operator) inside.
  for (int K = 0; K < coarse.element_count(); ++K) {
    const LocalPatch p = make_patch(fine, fine.coarse_to_fine[static_cast<size_t>(K)]);
    const auto on_bnd = boundary_mask(fine, p);
    std::vector<int> interior, boundary;
    for (int i = 0; i < p.size(); ++i)
      (on_bnd[static_cast<size_t>(i)] ? boundary : interior).push_back(i);

    Matrix hats(p.size(), 3);
    for (int i = 0; i < p.size(); ++i)
      for (int c = 0; c < 3; ++c)
        hats(i, c) = hat_value(fine, coarse, K, c, p.verts[static_cast<size_t>(i)]);

    Matrix values = hats; // boundary rows are final; interior rows replaced
    if (!interior.empty()) {
      const Matrix a = patch_stiffness(fine, p, params.k_m, params.k_f);
      Matrix a_ii(interior.size(), interior.size());
      Matrix a_ib(interior.size(), boundary.size());
      for (size_t i = 0; i < interior.size(); ++i) {
        for (size_t j = 0; j < interior.size(); ++j)
          a_ii(i, j) = a(interior[i], interior[j]);
        for (size_t j = 0; j < boundary.size(); ++j)
          a_ib(i, j) = a(interior[i], boundary[j]);
      }
      Matrix g(boundary.size(), 3);
      for (size_t j = 0; j < boundary.size(); ++j)
        g.row(j) = hats.row(boundary[j]);
      Eigen::LLT<Matrix> llt(a_ii);
      if (llt.info() != Eigen::Success)
        throw SolverError("build_partition_of_unity: interior block of "
                          "element " + std::to_string(K) + " not SPD");
      const Matrix x = llt.solve(-(a_ib * g));
      for (size_t i = 0; i < interior.size(); ++i)
        values.row(interior[i]) = x.row(static_cast<Index>(i));
    }

    for (int c = 0; c < 3; ++c) {
      Vector& chi = pou.chi[static_cast<size_t>(coarse.elements[K][c])];
      for (int i = 0; i < p.size(); ++i)
        chi[p.verts[static_cast<size_t>(i)]] = values(i, c);
    }
  }

  // Spectral weight per fine triangle: conductivity times the summed squared
  // gradients of the chi functions of the owning coarse element's corners
  // (all other chi vanish on the triangle).
  pou.triangle_weight.resize(fine.element_count());
  for (int t = 0; t < fine.element_count(); ++t) {
    const auto& e = fine.elements[static_cast<size_t>(t)];
    const Vector2& q0 = fine.vertices[e[0]];
    const Vector2& q1 = fine.vertices[e[1]];
    const Vector2& q2 = fine.vertices[e[2]];
    const Real area2 = (q1.x() - q0.x()) * (q2.y() - q0.y()) -
                       (q2.x() - q0.x()) * (q1.y() - q0.y());
    const Real b[3] = {q1.y() - q2.y(), q2.y() - q0.y(), q0.y() - q1.y()};
    const Real c[3] = {q2.x() - q1.x(), q0.x() - q2.x(), q1.x() - q0.x()};
    const int K = fine.coarse_element_of[static_cast<size_t>(t)];
    Real sum = 0;
    for (int corner : coarse.elements[static_cast<size_t>(K)]) {
      const Vector& chi = pou.chi[static_cast<size_t>(corner)];
      Real gx = 0, gy = 0;
      for (int k = 0; k < 3; ++k) {
        gx += b[k] * chi[e[k]];
        gy += c[k] * chi[e[k]];
      }
      sum += (gx * gx + gy * gy) / (area2 * area2);
    }
    pou.triangle_weight[t] = params.k_m * sum;
  }

  // Same density along fracture edges: k_f times the summed squared
  // tangential slopes of every chi alive at the edge.
  pou.fracture_edge_weight.resize(static_cast<Index>(fine.fracture_edges.size()));
  if (!fine.fracture_edges.empty()) {
    std::vector<std::vector<int>> vertex_tris(fine.vertices.size());
    for (int t = 0; t < fine.element_count(); ++t)
      for (int v : fine.elements[static_cast<size_t>(t)])
        vertex_tris[static_cast<size_t>(v)].push_back(t);
    for (size_t i = 0; i < fine.fracture_edges.size(); ++i) {
      const auto& fe = fine.fracture_edges[i];
      const Real len = (fine.vertices[fe.v1] - fine.vertices[fe.v0]).norm();
      std::set<int> corners;
      for (int v : {fe.v0, fe.v1})
        for (int t : vertex_tris[static_cast<size_t>(v)])
          for (int c : coarse.elements[static_cast<size_t>(
                   fine.coarse_element_of[static_cast<size_t>(t)])])
            corners.insert(c);
      Real sum = 0;
      for (int c : corners) {
        const Vector& chi = pou.chi[static_cast<size_t>(c)];
        const Real slope = (chi[fe.v1] - chi[fe.v0]) / len;
        sum += slope * slope;
      }
      pou.fracture_edge_weight[static_cast<Index>(i)] = params.k_f * sum;
    }
  }
  return pou;
}

} // namespace detail

std::vector<Vector> compute_snapshots(const FineMesh& fine,
                                      const CoarseMesh& coarse, int vertex,
                                      const AssemblyParams& params) {
  params.validate();
  const LocalPatch p = make_patch(fine, neighborhood_elements(fine, coarse, vertex));
  const std::vector<int> bnd = neighborhood_boundary(fine, coarse, vertex);

  std::vector<char> is_bnd(fine.vertices.size(), 0);
  for (int v : bnd) is_bnd[static_cast<size_t>(v)] = 1;
  std::vector<int> interior; // local indices, ascending vertex id
  for (int i = 0; i < p.size(); ++i)
    if (!is_bnd[static_cast<size_t>(p.verts[static_cast<size_t>(i)])])
      interior.push_back(i);
  if (interior.empty())
    throw DegenerateNeighborhood("compute_snapshots: neighborhood of coarse "
                                 "vertex " + std::to_string(vertex) +
                                 " has no interior fine vertices");

  const Matrix a = patch_stiffness(fine, p, params.k_m, params.k_f);
  Matrix a_ii(interior.size(), interior.size());
  Matrix a_ib(interior.size(), bnd.size());
  for (size_t i = 0; i < interior.size(); ++i) {
    for (size_t j = 0; j < interior.size(); ++j)
      a_ii(i, j) = a(interior[i], interior[j]);
    for (size_t j = 0; j < bnd.size(); ++j)
      a_ib(i, j) = a(interior[i], p.local(bnd[j]));
  }
  Eigen::LLT<Matrix> llt(a_ii);
  if (llt.info() != Eigen::Success)
    throw SolverError("compute_snapshots: interior operator not SPD");
  const Matrix x = llt.solve(-a_ib); // harmonic extension of each indicator

  std::vector<Vector> snapshots;
  snapshots.reserve(bnd.size());
  for (size_t b = 0; b < bnd.size(); ++b) {
    Vector z = Vector::Zero(fine.vertex_count());
    z[bnd[b]] = 1;
    for (size_t i = 0; i < interior.size(); ++i)
      z[p.verts[static_cast<size_t>(interior[i])]] =
          x(static_cast<Index>(i), static_cast<Index>(b));
    snapshots.push_back(std::move(z));
  }
  return snapshots;
}

namespace detail {

SpectralBasis local_spectral_basis(const PartitionOfUnity& pou,
                                   const std::vector<Vector>& snapshots,
                                   const FineMesh& fine,
                                   const CoarseMesh& coarse, int vertex,
                                   const AssemblyParams& params, int n_modes) {
  if (n_modes < 1 || n_modes > static_cast<int>(snapshots.size()))
    throw InvalidArgument(
        "local_spectral_basis: n_modes must be in [1, #snapshots]");
  const LocalPatch p = make_patch(fine, neighborhood_elements(fine, coarse, vertex));
  for (const auto& z : snapshots)
    if (z.size() != fine.vertex_count())
      throw InvalidArgument("local_spectral_basis: snapshot size mismatch");

  const Matrix a = patch_stiffness(fine, p, params.k_m, params.k_f);
  Matrix s = Matrix::Zero(p.size(), p.size());
  for (int t : p.tris) {
    const Real w = pou.triangle_weight[t];
    if (w == 0) continue;
    const auto& e = fine.elements[static_cast<size_t>(t)];
    const auto me = detail::local_mass(fine.vertices[e[0]], fine.vertices[e[1]],
                                       fine.vertices[e[2]], w);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) s(p.local(e[i]), p.local(e[j])) += me(i, j);
  }
  for (int idx : p.fracture_ids) {
    const auto& fe = fine.fracture_edges[static_cast<size_t>(idx)];
    const Real w = pou.fracture_edge_weight[idx];
    if (w == 0) continue;
    const Real len = (fine.vertices[fe.v1] - fine.vertices[fe.v0]).norm();
    const int l0 = p.local(fe.v0), l1 = p.local(fe.v1);
    // 1-D consistent mass of the edge, density w.
    s(l0, l0) += w * len / 3;
    s(l1, l1) += w * len / 3;
    s(l0, l1) += w * len / 6;
    s(l1, l0) += w * len / 6;
  }

  Matrix z(p.size(), snapshots.size());
  for (size_t b = 0; b < snapshots.size(); ++b)
    for (int i = 0; i < p.size(); ++i)
      z(i, static_cast<Index>(b)) = snapshots[b][p.verts[static_cast<size_t>(i)]];

  const Matrix a_snap = z.transpose() * a * z;
  const Matrix s_snap = z.transpose() * s * z;
  const EigenSolution eig = generalized_selfadjoint_eigen(a_snap, s_snap);

  SpectralBasis out;
  out.eigenvalues = eig.values;
  out.modes.reserve(static_cast<size_t>(n_modes));
  for (int k = 0; k < n_modes; ++k) {
    const Vector coeff = eig.vectors.col(k);
    Vector mode = Vector::Zero(fine.vertex_count());
    const Vector local = z * coeff;
    for (int i = 0; i < p.size(); ++i)
      mode[p.verts[static_cast<size_t>(i)]] = local[i];
    out.modes.push_back(std::move(mode));
  }
  return out;
}

} // namespace detail

SpectralBasis local_spectral_basis(const std::vector<Vector>& snapshots,
                                   const FineMesh& fine,
                                   const CoarseMesh& coarse, int vertex,
                                   const AssemblyParams& params, int n_modes) {
  const auto pou = detail::build_partition_of_unity(fine, coarse, params);
  return detail::local_spectral_basis(pou, snapshots, fine, coarse, vertex,
                                      params, n_modes);
}

MultiscaleSpace build_space(const FineMesh& fine, const CoarseMesh& coarse,
                            const AssemblyParams& params, int n_bases) {
  params.validate();
  if (n_bases < 1)
    throw InvalidArgument("build_space: n_bases must be >= 1");

  MultiscaleSpace space;
  space.n_bases = n_bases;
  space.n_coarse_vertices = coarse.vertex_count();
  space.bases.resize(static_cast<size_t>(space.dof_count()));
  space.spectra.resize(static_cast<size_t>(coarse.vertex_count()));

  const auto pou = detail::build_partition_of_unity(fine, coarse, params);
  const SparseSymMatrix a_raw =
      assemble_stiffness(fine, params, BoundaryHandling::none);

  for (int i = 0; i < coarse.vertex_count(); ++i) {
    const auto snapshots = compute_snapshots(fine, coarse, i, params);
    const auto sb = detail::local_spectral_basis(pou, snapshots, fine, coarse,
                                                 i, params, n_bases);
    space.spectra[static_cast<size_t>(i)] = sb.eigenvalues;
    space.bases[static_cast<size_t>(space.dof(i, 0))] = pou.chi[static_cast<size_t>(i)];
    for (int j = 1; j < n_bases; ++j) {
      Vector phi = pou.chi[static_cast<size_t>(i)].cwiseProduct(sb.modes[static_cast<size_t>(j)]);
      const Real energy = phi.dot(a_raw.apply(phi));
      if (!(energy > 0))
        throw SpectralError("build_space: zero-energy basis at coarse vertex " +
                            std::to_string(i));
      space.bases[static_cast<size_t>(space.dof(i, j))] = phi / std::sqrt(energy);
    }
  }

  const int w = coarse.n + 1;
  for (int iy = 0; iy < w; ++iy)
    for (int j = 0; j < n_bases; ++j)
      space.dirichlet_dofs.push_back(space.dof(coarse.vertex_id(0, iy), j));
  std::sort(space.dirichlet_dofs.begin(), space.dirichlet_dofs.end());
  return space;
}

void CoarseSystem::rebuild_globals() {
  SymmetricAssembler am(dof_count), aa(dof_count);
  for (const auto& el : elements) {
    const Index m = el.mass.rows();
    for (Index a = 0; a < m; ++a) {
      const int ga = el.dofs[static_cast<size_t>(a)];
      am.add(ga, ga, el.mass(a, a));
      aa.add(ga, ga, el.stiffness(a, a));
      for (Index b = a + 1; b < m; ++b) {
        const int gb = el.dofs[static_cast<size_t>(b)];
        am.add(ga, gb, (el.mass(a, b) + el.mass(b, a)) / 2);
        aa.add(ga, gb, (el.stiffness(a, b) + el.stiffness(b, a)) / 2);
      }
    }
  }
  mass = am.finalize();
  stiffness = aa.finalize();
}

CoarseSystem assemble_coarse(const MultiscaleSpace& space, const FineMesh& fine,
                             const CoarseMesh& coarse,
                             const AssemblyParams& params) {
  params.validate();
  if (space.n_coarse_vertices != coarse.vertex_count())
    throw InvalidArgument("assemble_coarse: space/mesh mismatch");
  const int nb = space.n_bases;

  // A fracture edge inside a coarse element belongs to it; an edge on the
  // interface between two elements is credited to the smaller element id, so
  // the blocks sum to the global operators without double counting.
  std::vector<std::vector<int>> owned(coarse.elements.size());
  if (!fine.fracture_edges.empty()) {
    const EdgeTriangles et = build_edge_triangles(fine);
    for (size_t i = 0; i < fine.fracture_edges.size(); ++i) {
      const auto& fe = fine.fracture_edges[i];
      const auto it = et.tris.find(edge_key(fe.v0, fe.v1));
      if (it == et.tris.end())
        throw AssemblyError("assemble_coarse: fracture edge off the mesh");
      const int t0 = it->second.first, t1 = it->second.second;
      int K = fine.coarse_element_of[static_cast<size_t>(t0)];
      if (t1 >= 0)
        K = std::min(K, fine.coarse_element_of[static_cast<size_t>(t1)]);
      owned[static_cast<size_t>(K)].push_back(static_cast<int>(i));
    }
  }

  CoarseSystem sys;
  sys.n_bases = nb;
  sys.mass_density = params.c_m;
  sys.dof_count = space.dof_count();
  sys.dirichlet_dofs = space.dirichlet_dofs;
  sys.elements.reserve(coarse.elements.size());

  for (int K = 0; K < coarse.element_count(); ++K) {
    LocalPatch p = make_patch(fine, fine.coarse_to_fine[static_cast<size_t>(K)],
                              /*collect_fractures=*/false);
    p.fracture_ids = owned[static_cast<size_t>(K)];

    const Matrix m_loc = patch_mass(fine, p, params.c_m);
    const Matrix a_loc = patch_stiffness(fine, p, params.k_m, params.k_f);

    CoarseElementOperators el;
    el.element = K;
    el.corners = coarse.elements[static_cast<size_t>(K)];
    Real area2 = 0;
    {
      const Vector2& q0 = coarse.vertices[el.corners[0]];
      const Vector2& q1 = coarse.vertices[el.corners[1]];
      const Vector2& q2 = coarse.vertices[el.corners[2]];
      el.corner_coords = {q0, q1, q2};
      area2 = (q1.x() - q0.x()) * (q2.y() - q0.y()) -
              (q2.x() - q0.x()) * (q1.y() - q0.y());
    }
    el.volume = area2 / 2;

    Matrix phi(p.size(), 3 * nb);
    el.dofs.resize(static_cast<size_t>(3 * nb));
    for (int c = 0; c < 3; ++c)
      for (int j = 0; j < nb; ++j) {
        const int col = c * nb + j;
        el.dofs[static_cast<size_t>(col)] = space.dof(el.corners[c], j);
        const Vector& basis = space.basis(el.corners[c], j);
        for (int i = 0; i < p.size(); ++i)
          phi(i, col) = basis[p.verts[static_cast<size_t>(i)]];
      }

    Matrix m_blk = phi.transpose() * m_loc * phi;
    Matrix a_blk = phi.transpose() * a_loc * phi;
    el.mass = (m_blk + m_blk.transpose()) / 2;
    el.stiffness = (a_blk + a_blk.transpose()) / 2;
    sys.elements.push_back(std::move(el));
  }

  sys.load = Vector::Zero(sys.dof_count);
  if (params.f != 0) {
    const Vector b_fine = assemble_load(fine, params.f);
    for (Index d = 0; d < sys.dof_count; ++d)
      sys.load[d] = space.bases[static_cast<size_t>(d)].dot(b_fine);
  }

  sys.rebuild_globals();
  return sys;
}

void write_eigenvalue_csv(const MultiscaleSpace& space,
                          const std::string& path) {
  auto out = detail::open_output(path);
  out << "vertex,rank,eigenvalue\n";
  for (int i = 0; i < space.n_coarse_vertices; ++i) {
    const Vector& ev = space.spectra[static_cast<size_t>(i)];
    for (Index k = 0; k < ev.size(); ++k)
      out << i << ',' << k << ',' << detail::format_real(ev[k]) << '\n';
  }
}

} // namespace msinv
