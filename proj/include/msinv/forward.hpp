#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "msinv/gmsfem.hpp"

namespace msinv {

// Uniform-step trajectory: states[n] holds the coefficients at t_n = n*dt.
struct Trajectory {
  Real dt = 0;
  std::vector<Vector> states;

  int steps() const { return static_cast<int>(states.size()) - 1; }
};

// Implicit Euler for M c' + A c = b with c(0) = c0:
// (M + dt A) c_{n+1} = M c_n + dt b, one Cholesky factorisation reused for
// all steps, each step verified to relative residual 1e-10. Dirichlet rows
// reduced to unit diagonals keep their components fixed when b carries the
// boundary value there (zero for the homogeneous condition used here).
Trajectory integrate(const SparseSymMatrix& m, const SparseSymMatrix& a,
                     const Vector& b, const Vector& c0, Real t_final,
                     int n_steps);

// Dirichlet-eliminated copies of the coarse operators, load zeroed on the
// constrained dofs.
struct CoarseOperators {
  SparseSymMatrix mass;
  SparseSymMatrix stiffness;
  Vector load;
};

CoarseOperators eliminated_operators(const CoarseSystem& sys);

// L2 projection of the constant initial value p0 onto the multiscale space,
// solved with the system's own (eliminated) mass matrix; constrained dofs
// stay at the boundary value zero.
Vector initial_coarse_state(const CoarseSystem& sys,
                            const MultiscaleSpace& space, const FineMesh& fine,
                            const AssemblyParams& params);

// Fine-grid reference: nodal initial state (p0 everywhere, zero on the left
// edge) integrated with the eliminated fine operators.
Vector initial_fine_state(const FineMesh& fine, const AssemblyParams& params);
Trajectory fine_reference_solve(const FineMesh& fine,
                                const AssemblyParams& params);

// Per-dof weights of the cell-average observable of one element: row sums of
// the symmetrised mass block over the first-basis (partition-of-unity)
// columns. cell_average(c, K) = w . c_K / (density * |K|), the density factor
// cancelling the one carried by the mass blocks.
Vector observation_weights(const CoarseElementOperators& block);

// Mean of the multiscale solution over coarse element K, evaluated through
// mass-block entries only.
Real cell_average(const CoarseSystem& sys, const Vector& c, int element);

// Rows follow `cells`, columns the trajectory times.
Matrix cell_averages(const CoarseSystem& sys, const std::vector<Vector>& states,
                     std::span<const int> cells);

// Mean of a fine-grid function over coarse element K (exact P1 quadrature).
Real fine_cell_average(const FineMesh& fine, const Vector& u, int element);
Matrix fine_cell_averages(const FineMesh& fine,
                          const std::vector<Vector>& states,
                          std::span<const int> cells);

// Synthetic measurements: per-cell averages of a fine reference trajectory
// with i.i.d. multiplicative noise (1 + delta*r), r uniform on [-1,1), one
// draw per (cell, time) in cell-major order from a seeded generator.
struct ObservationSeries {
  std::vector<int> cells; // ascending coarse element ids
  Matrix values;          // cells.size() x (n_steps + 1)
  Real delta = 0;
  std::uint64_t seed = 0;
};

ObservationSeries make_observations(const FineMesh& fine,
                                    const std::vector<Vector>& fine_states,
                                    std::span<const int> cells, Real delta,
                                    std::uint64_t seed);

// "cell_id,time_index,value" rows, cell-major.
void write_observation_csv(const ObservationSeries& obs,
                           const std::string& path);

// Average flux (integral of the conductivity-weighted gradient, fracture
// contribution included) over element K, recovered from stiffness-block
// columns of the first bases against the constant gradients of the linear
// hats on K. Exact for states assembled from first-basis functions.
Vector2 recover_flux_averages(const CoarseSystem& sys, const Vector& c,
                              int element);

} // namespace msinv
