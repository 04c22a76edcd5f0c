#pragma once

#include <array>
#include <string>
#include <vector>

#include "msinv/assembly.hpp"
#include "msinv/geometry.hpp"
#include "msinv/types.hpp"

namespace msinv {

// Multiscale space: per coarse vertex i, n_bases fine-mesh functions
// supported on the patch of i. The first basis of every vertex is the
// partition-of-unity function chi_i itself; basis j >= 2 is chi_i times the
// j-th local spectral mode, scaled to unit energy norm. Coarse dofs are
// numbered vertex-major: dof(i, j) = i * n_bases + j.
struct MultiscaleSpace {
  int n_bases = 1;
  int n_coarse_vertices = 0;
  std::vector<Vector> bases;       // fine nodal vectors, dof-indexed
  std::vector<Vector> spectra;     // per coarse vertex: full local spectrum
  std::vector<int> dirichlet_dofs; // all modes of left-edge coarse vertices

  int dof_count() const { return n_coarse_vertices * n_bases; }
  int dof(int vertex, int mode) const { return vertex * n_bases + mode; }
  const Vector& basis(int vertex, int mode) const {
    return bases[static_cast<size_t>(dof(vertex, mode))];
  }
};

// Harmonic snapshot family of the patch of coarse vertex `vertex`: one fine
// nodal vector per patch-boundary vertex (in the boundary's lexicographic
// order), equal to the indicator there and discretely harmonic inside with
// respect to the local conductivity operator. Throws DegenerateNeighborhood
// when the patch has no interior fine vertices.
std::vector<Vector> compute_snapshots(const FineMesh& fine,
                                      const CoarseMesh& coarse, int vertex,
                                      const AssemblyParams& params);

struct SpectralBasis {
  Vector eigenvalues;        // full ascending spectrum of the patch problem
  std::vector<Vector> modes; // first n_modes eigenfunctions, fine vectors
};

// Generalized spectral problem on the snapshot span: stiffness against the
// weighted mass form whose density is the conductivity times the summed
// squared partition-of-unity gradients. Smallest eigenvalues first; modes
// are S-orthonormal with a deterministic sign.
SpectralBasis local_spectral_basis(const std::vector<Vector>& snapshots,
                                   const FineMesh& fine,
                                   const CoarseMesh& coarse, int vertex,
                                   const AssemblyParams& params, int n_modes);

// Builds the full multiscale space with n_bases functions per coarse vertex.
// Local spectra are computed (and stored) for every vertex.
MultiscaleSpace build_space(const FineMesh& fine, const CoarseMesh& coarse,
                            const AssemblyParams& params, int n_bases);

// Projected mass and stiffness blocks of one coarse element: square matrices
// of size 3 * n_bases over the element's corner dofs, corner-major.
struct CoarseElementOperators {
  int element = 0;
  std::array<int, 3> corners{};
  std::array<Vector2, 3> corner_coords{};
  Real volume = 0;
  std::vector<int> dofs; // global coarse dofs, corner-major
  Matrix mass;
  Matrix stiffness;
};

// Element-wise coarse operators plus their assembled global counterparts.
// The element blocks are the inversion unknowns; after editing them call
// rebuild_globals() to refresh the assembled matrices.
struct CoarseSystem {
  int n_bases = 1;
  Index dof_count = 0;
  Real mass_density = 1; // density baked into the mass blocks; divides
                         // mass-derived observables so they stay plain means
  std::vector<CoarseElementOperators> elements;
  std::vector<int> dirichlet_dofs;
  SparseSymMatrix mass;      // no boundary treatment applied
  SparseSymMatrix stiffness; // no boundary treatment applied
  Vector load;               // source against the basis functions

  void rebuild_globals();
};

// Projects fine mass and stiffness onto the space element by element.
// Fracture edges shared by two coarse elements are credited to the one with
// the smaller element id, so the blocks sum to the global operators exactly.
CoarseSystem assemble_coarse(const MultiscaleSpace& space, const FineMesh& fine,
                             const CoarseMesh& coarse,
                             const AssemblyParams& params);

// Cell-average discrepancy between a fine reference trajectory and the
// coarse model evolved from the projected initial state, both observed
// through per-cell averages. per_time[n] is the volume-weighted relative
// l2 error over cells at time index n; aggregate integrates over time.
struct ProjectionQuality {
  Vector per_time;
  Real aggregate = 0;
};

ProjectionQuality coarse_projection_error(const MultiscaleSpace& space,
                                          const CoarseSystem& system,
                                          const std::vector<Vector>& fine_states,
                                          const FineMesh& fine,
                                          const CoarseMesh& coarse,
                                          const AssemblyParams& params);

// Writes "vertex,rank,eigenvalue" rows for every stored local spectrum.
void write_eigenvalue_csv(const MultiscaleSpace& space,
                          const std::string& path);

namespace detail {

// chi functions plus the spectral weight fields derived from them: per fine
// triangle k_m * sum_j |grad chi_j|^2, per fracture edge k_f times the
// summed squared tangential slopes.
struct PartitionOfUnity {
  std::vector<Vector> chi; // per coarse vertex, fine nodal values
  Vector triangle_weight;
  Vector fracture_edge_weight;
};

PartitionOfUnity build_partition_of_unity(const FineMesh& fine,
                                          const CoarseMesh& coarse,
                                          const AssemblyParams& params);

SpectralBasis local_spectral_basis(const PartitionOfUnity& pou,
                                   const std::vector<Vector>& snapshots,
                                   const FineMesh& fine,
                                   const CoarseMesh& coarse, int vertex,
                                   const AssemblyParams& params, int n_modes);

} // namespace detail

} // namespace msinv
