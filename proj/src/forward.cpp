#include "msinv/forward.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "msinv/detail/io.hpp"
#include "msinv/errors.hpp"

namespace msinv {

Trajectory integrate(const SparseSymMatrix& m, const SparseSymMatrix& a,
                     const Vector& b, const Vector& c0, Real t_final,
                     int n_steps) {
  const Index n = m.dimension();
  if (a.dimension() != n || b.size() != n || c0.size() != n)
    throw InvalidArgument("integrate: dimension mismatch");
  if (n_steps < 1 || !(t_final > 0))
    throw InvalidArgument("integrate: need n_steps >= 1 and t_final > 0");
  const Real dt = t_final / n_steps;

  SparseSymMatrix s(SparseMatrix(m.matrix() + dt * a.matrix()));
  SparseCholesky chol;
  if (!chol.try_compute(s))
    throw SolverError("integrate: M + dt*A is not SPD (time-step operator)");

  Trajectory traj;
  traj.dt = dt;
  traj.states.reserve(static_cast<size_t>(n_steps) + 1);
  traj.states.push_back(c0);
  const Vector db = dt * b;
  // Backward-error scale of the step operator: with high contrast the
  // achievable residual is eps_machine * (|S| |x| + |rhs|), not a fraction
  // of |rhs| alone.
  Real s_norm = 0;
  for (Index col = 0; col < s.matrix().outerSize(); ++col) {
    Real sum = 0;
    for (SparseMatrix::InnerIterator it(s.matrix(), col); it; ++it)
      sum += std::abs(it.value());
    s_norm = std::max(s_norm, sum);
  }

  for (int k = 1; k <= n_steps; ++k) {
    const Vector rhs = m.apply(traj.states.back()) + db;
    Vector next = chol.solve(rhs);
    const Real rhs_norm = rhs.norm();
    if (rhs_norm > 0) {
      const auto scale = [&](const Vector& x) {
        return s_norm * x.norm() + rhs_norm;
      };
      // A couple of refinement sweeps recover a sloppy first solve.
      Vector residual = rhs - s.apply(next);
      for (int sweep = 0;
           sweep < 3 && residual.norm() > Real(1e-10) * scale(next); ++sweep) {
        next += chol.solve(residual);
        residual = rhs - s.apply(next);
      }
      if (residual.norm() > Real(1e-10) * scale(next))
        throw SolverError("integrate: step " + std::to_string(k) +
                          " exceeded the residual tolerance");
    }
    traj.states.push_back(std::move(next));
  }
  return traj;
}

CoarseOperators eliminated_operators(const CoarseSystem& sys) {
  CoarseOperators ops;
  ops.mass = eliminate_dirichlet(sys.mass, sys.dirichlet_dofs);
  ops.stiffness = eliminate_dirichlet(sys.stiffness, sys.dirichlet_dofs);
  ops.load = sys.load;
  for (int d : sys.dirichlet_dofs) ops.load[d] = 0;
  return ops;
}

Vector initial_coarse_state(const CoarseSystem& sys,
                            const MultiscaleSpace& space, const FineMesh& fine,
                            const AssemblyParams& params) {
  if (space.dof_count() != sys.dof_count)
    throw InvalidArgument("initial_coarse_state: space/system mismatch");
  const SparseSymMatrix m_fine = assemble_mass(fine, params);
  const Vector v =
      m_fine.apply(Vector::Constant(fine.vertex_count(), params.p0));
  Vector rhs(sys.dof_count);
  for (Index d = 0; d < sys.dof_count; ++d)
    rhs[d] = space.bases[static_cast<size_t>(d)].dot(v);
  for (int d : sys.dirichlet_dofs) rhs[d] = 0;
  SparseCholesky chol;
  chol.compute(eliminate_dirichlet(sys.mass, sys.dirichlet_dofs));
  return chol.solve(rhs);
}

Vector initial_fine_state(const FineMesh& fine, const AssemblyParams& params) {
  Vector u = Vector::Constant(fine.vertex_count(), params.p0);
  for (int v : fine.dirichlet_vertices()) u[v] = 0;
  return u;
}

Trajectory fine_reference_solve(const FineMesh& fine,
                                const AssemblyParams& params) {
  params.validate();
  const auto dirichlet = fine.dirichlet_vertices();
  const SparseSymMatrix m =
      eliminate_dirichlet(assemble_mass(fine, params), dirichlet);
  const SparseSymMatrix a = assemble_stiffness(fine, params);
  Vector b = assemble_load(fine, params.f);
  for (int v : dirichlet) b[v] = 0;
  return integrate(m, a, b, initial_fine_state(fine, params), params.T,
                   params.n_t);
}

Vector observation_weights(const CoarseElementOperators& block) {
  const Index m = block.mass.rows();
  const Index nb = m / 3;
  Vector w = Vector::Zero(m);
  for (Index a = 0; a < m; ++a)
    for (Index b = 0; b < m; b += nb)
      w[a] += (block.mass(a, b) + block.mass(b, a)) / 2;
  return w;
}

Real cell_average(const CoarseSystem& sys, const Vector& c, int element) {
  if (element < 0 || element >= static_cast<int>(sys.elements.size()))
    throw InvalidArgument("cell_average: element out of range");
  const auto& block = sys.elements[static_cast<size_t>(element)];
  const Vector w = observation_weights(block);
  Real sum = 0;
  for (Index a = 0; a < w.size(); ++a)
    sum += w[a] * c[block.dofs[static_cast<size_t>(a)]];
  return sum / (block.volume * sys.mass_density);
}

Matrix cell_averages(const CoarseSystem& sys, const std::vector<Vector>& states,
                     std::span<const int> cells) {
  Matrix out(cells.size(), states.size());
  for (size_t i = 0; i < cells.size(); ++i) {
    const auto& block = sys.elements[static_cast<size_t>(cells[i])];
    const Vector w = observation_weights(block);
    for (size_t n = 0; n < states.size(); ++n) {
      Real sum = 0;
      for (Index a = 0; a < w.size(); ++a)
        sum += w[a] * states[n][block.dofs[static_cast<size_t>(a)]];
      out(static_cast<Index>(i), static_cast<Index>(n)) =
          sum / (block.volume * sys.mass_density);
    }
  }
  return out;
}

Real fine_cell_average(const FineMesh& fine, const Vector& u, int element) {
  if (element < 0 || element >= static_cast<int>(fine.coarse_to_fine.size()))
    throw InvalidArgument("fine_cell_average: element out of range");
  Real integral = 0, volume = 0;
  for (int t : fine.coarse_to_fine[static_cast<size_t>(element)]) {
    const auto& e = fine.elements[static_cast<size_t>(t)];
    const Vector2& p0 = fine.vertices[e[0]];
    const Real area2 =
        (fine.vertices[e[1]].x() - p0.x()) * (fine.vertices[e[2]].y() - p0.y()) -
        (fine.vertices[e[2]].x() - p0.x()) * (fine.vertices[e[1]].y() - p0.y());
    const Real area = area2 / 2;
    integral += area / 3 * (u[e[0]] + u[e[1]] + u[e[2]]);
    volume += area;
  }
  return integral / volume;
}

Matrix fine_cell_averages(const FineMesh& fine,
                          const std::vector<Vector>& states,
                          std::span<const int> cells) {
  Matrix out(cells.size(), states.size());
  for (size_t i = 0; i < cells.size(); ++i)
    for (size_t n = 0; n < states.size(); ++n)
      out(static_cast<Index>(i), static_cast<Index>(n)) =
          fine_cell_average(fine, states[n], cells[i]);
  return out;
}

ObservationSeries make_observations(const FineMesh& fine,
                                    const std::vector<Vector>& fine_states,
                                    std::span<const int> cells, Real delta,
                                    std::uint64_t seed) {
  if (!(delta >= 0))
    throw InvalidArgument("make_observations: delta must be >= 0");
  ObservationSeries obs;
  obs.cells.assign(cells.begin(), cells.end());
  std::sort(obs.cells.begin(), obs.cells.end());
  obs.cells.erase(std::unique(obs.cells.begin(), obs.cells.end()),
                  obs.cells.end());
  obs.values = fine_cell_averages(fine, fine_states, obs.cells);
  obs.delta = delta;
  obs.seed = seed;
  if (delta > 0) {
    // Raw 53-bit draws mapped by hand: identical streams on every platform,
    // unlike std::uniform_real_distribution.
    std::mt19937_64 rng(seed);
    for (Index i = 0; i < obs.values.rows(); ++i)
      for (Index n = 0; n < obs.values.cols(); ++n) {
        const Real u = static_cast<Real>(rng() >> 11) / Real(9007199254740992);
        obs.values(i, n) *= 1 + delta * (2 * u - 1);
      }
  }
  return obs;
}

void write_observation_csv(const ObservationSeries& obs,
                           const std::string& path) {
  auto out = detail::open_output(path);
  out << "cell_id,time_index,value\n";
  for (Index i = 0; i < obs.values.rows(); ++i)
    for (Index n = 0; n < obs.values.cols(); ++n)
      out << obs.cells[static_cast<size_t>(i)] << ',' << n << ','
          << detail::format_real(obs.values(i, n)) << '\n';
}

Vector2 recover_flux_averages(const CoarseSystem& sys, const Vector& c,
                              int element) {
  if (element < 0 || element >= static_cast<int>(sys.elements.size()))
    throw InvalidArgument("recover_flux_averages: element out of range");
  const auto& block = sys.elements[static_cast<size_t>(element)];
  const Index m = block.stiffness.rows();
  const Index nb = m / 3;

  // Right-hand side: energy pairings of the state with the first bases of
  // corners 0 and 1, using the symmetrised stiffness block.
  Vector2 r;
  for (Index d = 0; d < 2; ++d) {
    Real sum = 0;
    const Index col = d * nb;
    for (Index a = 0; a < m; ++a)
      sum += c[block.dofs[static_cast<size_t>(a)]] *
             (block.stiffness(a, col) + block.stiffness(col, a)) / 2;
    r[d] = sum;
  }

  const Vector2& p0 = block.corner_coords[0];
  const Vector2& p1 = block.corner_coords[1];
  const Vector2& p2 = block.corner_coords[2];
  const Real area2 = (p1.x() - p0.x()) * (p2.y() - p0.y()) -
                     (p2.x() - p0.x()) * (p1.y() - p0.y());
  if (!(std::abs(area2) > 0))
    throw FluxRecoveryError("recover_flux_averages: degenerate element " +
                            std::to_string(element));
  const Vector2 g0(( p1.y() - p2.y()) / area2, (p2.x() - p1.x()) / area2);
  const Vector2 g1((p2.y() - p0.y()) / area2, (p0.x() - p2.x()) / area2);
  // Solve G^T q = r for the average flux q, G = [g0 g1].
  const Real det = g0.x() * g1.y() - g0.y() * g1.x();
  const Real scale = g0.norm() * g1.norm();
  if (!(std::abs(det) > 1e-12 * scale))
    throw FluxRecoveryError(
        "recover_flux_averages: gradient directions nearly dependent on "
        "element " +
        std::to_string(element));
  return Vector2((g1.y() * r[0] - g0.y() * r[1]) / det,
                 (-g1.x() * r[0] + g0.x() * r[1]) / det);
}

ProjectionQuality coarse_projection_error(const MultiscaleSpace& space,
                                          const CoarseSystem& system,
                                          const std::vector<Vector>& fine_states,
                                          const FineMesh& fine,
                                          const CoarseMesh& coarse,
                                          const AssemblyParams& params) {
  if (fine_states.size() < 2)
    throw InvalidArgument("coarse_projection_error: need at least two states");
  const int n_steps = static_cast<int>(fine_states.size()) - 1;

  // Project the initial fine state onto the space, then evolve the coarse
  // model and compare per-cell averages against the fine reference.
  const SparseSymMatrix m_fine = assemble_mass(fine, params);
  const Vector v = m_fine.apply(fine_states[0]);
  Vector rhs(system.dof_count);
  for (Index d = 0; d < system.dof_count; ++d)
    rhs[d] = space.bases[static_cast<size_t>(d)].dot(v);
  for (int d : system.dirichlet_dofs) rhs[d] = 0;

  const CoarseOperators ops = eliminated_operators(system);
  SparseCholesky chol;
  chol.compute(ops.mass);
  const Vector c0 = chol.solve(rhs);
  const Trajectory traj =
      integrate(ops.mass, ops.stiffness, ops.load, c0, params.T, n_steps);

  std::vector<int> all(coarse.element_count());
  std::iota(all.begin(), all.end(), 0);
  const Matrix model = cell_averages(system, traj.states, all);
  const Matrix ref = fine_cell_averages(fine, fine_states, all);

  ProjectionQuality q;
  q.per_time.resize(n_steps + 1);
  Real num_acc = 0, den_acc = 0;
  for (int n = 0; n <= n_steps; ++n) {
    Real num = 0, den = 0;
    for (int k = 0; k < coarse.element_count(); ++k) {
      const Real vol = system.elements[static_cast<size_t>(k)].volume;
      const Real d = model(k, n) - ref(k, n);
      num += vol * d * d;
      den += vol * ref(k, n) * ref(k, n);
    }
    q.per_time[n] = den > 0 ? std::sqrt(num / den) : std::sqrt(num);
    if (n >= 1) {
      num_acc += traj.dt * num;
      den_acc += traj.dt * den;
    }
  }
  q.aggregate =
      den_acc > 0 ? std::sqrt(num_acc / den_acc) : std::sqrt(num_acc);
  return q;
}

} // namespace msinv
