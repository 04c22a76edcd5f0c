#include "msinv/inversion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "msinv/detail/io.hpp"
#include "msinv/errors.hpp"

namespace msinv {

namespace {

std::vector<int> canonical_cells(std::vector<int> cells, int n_elements,
                                 const char* what) {
  std::sort(cells.begin(), cells.end());
  cells.erase(std::unique(cells.begin(), cells.end()), cells.end());
  for (int k : cells)
    if (k < 0 || k >= n_elements)
      throw InvalidArgument(std::string(what) + ": cell id out of range");
  return cells;
}

Matrix symmetrized(const Matrix& b) { return (b + b.transpose()) / 2; }

// Observation direction of one element as a global coarse vector: the
// volume-normalised weights scattered to the element dofs, zeroed on
// constrained dofs (their primal values are pinned).
Vector observation_vector(const CoarseSystem& sys,
                          const std::vector<char>& is_dirichlet, int cell) {
  const auto& block = sys.elements[static_cast<size_t>(cell)];
  const Vector w = observation_weights(block);
  Vector q = Vector::Zero(sys.dof_count);
  for (Index a = 0; a < w.size(); ++a) {
    const int d = block.dofs[static_cast<size_t>(a)];
    if (!is_dirichlet[static_cast<size_t>(d)])
      q[d] = w[a] / (block.volume * sys.mass_density);
  }
  return q;
}

} // namespace

void InversionConfig::validate(int n_elements) const {
  if (!(sigma_M > 0) || !(sigma_A > 0) || !(sigma_F > 0))
    throw InvalidArgument("InversionConfig: sigma weights must be positive");
  if (!(epsilon > 0))
    throw InvalidArgument("InversionConfig: epsilon must be positive");
  if (n_iter < 0)
    throw InvalidArgument("InversionConfig: n_iter must be >= 0");
  canonical_cells(update_mask, n_elements, "update_mask");
  canonical_cells(observed_cells, n_elements, "observed_cells");
}

void refresh_forward(InversionState& state, const InversionConfig& config,
                     const ObservationSeries& data) {
  const CoarseOperators ops = eliminated_operators(state.system);
  state.forward = integrate(ops.mass, ops.stiffness, ops.load, state.c0,
                            state.t_final, state.n_steps);
  state.model_values =
      cell_averages(state.system, state.forward.states, config.observed_cells);
  state.misfit = state.model_values - data.values;
  state.forward_current = true;
  state.adjoint_current = false;
}

InversionState make_state(const CoarseSystem& prior,
                          const MultiscaleSpace& space, const FineMesh& fine,
                          const AssemblyParams& params,
                          const InversionConfig& config,
                          const ObservationSeries& data) {
  params.validate();
  config.validate(static_cast<int>(prior.elements.size()));
  if (data.cells != config.observed_cells)
    throw InvalidArgument(
        "make_state: data cells do not match config.observed_cells");
  if (data.values.cols() != params.n_t + 1)
    throw InvalidArgument("make_state: data length does not match n_t");

  InversionState state;
  state.system = prior;
  state.prior_mass.reserve(prior.elements.size());
  state.prior_stiffness.reserve(prior.elements.size());
  for (const auto& el : prior.elements) {
    state.prior_mass.push_back(el.mass);
    state.prior_stiffness.push_back(el.stiffness);
  }
  state.c0 = initial_coarse_state(prior, space, fine, params);
  state.t_final = params.T;
  state.n_steps = params.n_t;
  refresh_forward(state, config, data);
  return state;
}

ObjectiveTerms objective(const InversionState& state,
                         const InversionConfig& config,
                         const ObservationSeries& data) {
  if (!state.forward_current)
    throw StateError("objective: forward trajectory is stale");
  (void)data;
  ObjectiveTerms terms;
  for (size_t k = 0; k < state.system.elements.size(); ++k) {
    const auto& el = state.system.elements[k];
    terms.term_m += (symmetrized(el.mass) - state.prior_mass[k]).squaredNorm();
    terms.term_a +=
        (symmetrized(el.stiffness) - state.prior_stiffness[k]).squaredNorm();
  }
  terms.term_m /= config.sigma_M * config.sigma_M;
  terms.term_a /= config.sigma_A * config.sigma_A;
  const Real dt = state.t_final / state.n_steps;
  for (Index i = 0; i < state.misfit.rows(); ++i)
    for (Index n = 1; n < state.misfit.cols(); ++n)
      terms.term_f += dt * state.misfit(i, n) * state.misfit(i, n);
  terms.term_f /= config.sigma_F * config.sigma_F;
  terms.j = terms.term_m + terms.term_a + terms.term_f;
  return terms;
}

void solve_adjoint(InversionState& state, const InversionConfig& config,
                   const ObservationSeries& data) {
  if (!state.forward_current)
    throw StateError("solve_adjoint: forward trajectory is stale");
  (void)data;
  const CoarseOperators ops = eliminated_operators(state.system);
  const Real dt = state.t_final / state.n_steps;
  SparseSymMatrix s(SparseMatrix(ops.mass.matrix() + dt * ops.stiffness.matrix()));
  SparseCholesky chol;
  if (!chol.try_compute(s))
    throw SolverError("solve_adjoint: M + dt*A is not SPD");

  std::vector<char> is_dirichlet(static_cast<size_t>(state.system.dof_count), 0);
  for (int d : state.system.dirichlet_dofs) is_dirichlet[static_cast<size_t>(d)] = 1;
  std::vector<Vector> q;
  q.reserve(config.observed_cells.size());
  for (int cell : config.observed_cells)
    q.push_back(observation_vector(state.system, is_dirichlet, cell));

  const Real weight = 2 * dt / (config.sigma_F * config.sigma_F);
  const int N = state.n_steps;
  state.adjoint.dt = dt;
  state.adjoint.states.assign(static_cast<size_t>(N) + 1,
                              Vector::Zero(state.system.dof_count));
  // Backward sweep: (M + dt A) w_n = M w_{n+1} + rho_{n+1}, w_N = 0, where
  // rho_k collects the misfit sources of step k.
  for (int n = N - 1; n >= 0; --n) {
    Vector rhs = ops.mass.apply(state.adjoint.states[static_cast<size_t>(n) + 1]);
    for (size_t i = 0; i < q.size(); ++i)
      rhs += weight * state.misfit(static_cast<Index>(i), n + 1) * q[i];
    state.adjoint.states[static_cast<size_t>(n)] = chol.solve(rhs);
  }
  state.adjoint_current = true;
}

BlockGradients gradient(const InversionState& state,
                        const InversionConfig& config) {
  if (!state.forward_current || !state.adjoint_current)
    throw StateError("gradient: trajectories are stale");
  const auto& sys = state.system;
  const int n_elements = static_cast<int>(sys.elements.size());
  const Real dt = state.t_final / state.n_steps;
  const int N = state.n_steps;

  std::vector<char> in_mask(static_cast<size_t>(n_elements), 0);
  for (int k : config.update_mask) in_mask[static_cast<size_t>(k)] = 1;
  std::vector<Index> obs_row(static_cast<size_t>(n_elements), -1);
  for (size_t i = 0; i < config.observed_cells.size(); ++i)
    obs_row[static_cast<size_t>(config.observed_cells[i])] = static_cast<Index>(i);

  BlockGradients grads;
  grads.mass.reserve(sys.elements.size());
  grads.stiffness.reserve(sys.elements.size());

  for (int K = 0; K < n_elements; ++K) {
    const auto& el = sys.elements[static_cast<size_t>(K)];
    const Index m = el.mass.rows();
    if (!in_mask[static_cast<size_t>(K)]) {
      grads.mass.push_back(Matrix::Zero(m, m));
      grads.stiffness.push_back(Matrix::Zero(m, m));
      continue;
    }

    // Local views of the trajectories: row n, column a = dof a at time n.
    Matrix cv(N + 1, m), wv(N + 1, m);
    for (int n = 0; n <= N; ++n)
      for (Index a = 0; a < m; ++a) {
        const int d = el.dofs[static_cast<size_t>(a)];
        cv(n, a) = state.forward.states[static_cast<size_t>(n)][d];
        wv(n, a) = state.adjoint.states[static_cast<size_t>(n)][d];
      }

    const Matrix m_sym = symmetrized(el.mass);
    const Matrix a_sym = symmetrized(el.stiffness);
    Matrix gm = (2 / (config.sigma_M * config.sigma_M)) *
                (m_sym - state.prior_mass[static_cast<size_t>(K)]);
    Matrix ga = (2 / (config.sigma_A * config.sigma_A)) *
                (a_sym - state.prior_stiffness[static_cast<size_t>(K)]);

    if (config.gradient_mode == GradientMode::consistent) {
      // Exact derivative of the discrete objective: adjoint-state pairings
      // of the time-step operator, symmetrized through the update chain.
      Matrix dyn_m = Matrix::Zero(m, m), dyn_a = Matrix::Zero(m, m);
      for (int n = 0; n < N; ++n)
        for (Index a = 0; a < m; ++a) {
          const Real w = wv(n, a);
          if (w == 0) continue;
          for (Index b = 0; b < m; ++b) {
            dyn_m(a, b) -= w * (cv(n + 1, b) - cv(n, b));
            dyn_a(a, b) -= dt * w * cv(n + 1, b);
          }
        }
      gm += symmetrized(dyn_m);
      ga += symmetrized(dyn_a);

      // The observation operator itself depends on the mass block; the
      // misfit term therefore carries an extra derivative through the
      // first-basis column sums.
      const Index row = obs_row[static_cast<size_t>(K)];
      if (row >= 0) {
        const Real fw = 2 * dt / (config.sigma_F * config.sigma_F);
        Vector u = Vector::Zero(m);
        for (int n = 1; n <= N; ++n) {
          const Real mis = state.misfit(row, n);
          if (mis == 0) continue;
          for (Index a = 0; a < m; ++a) u[a] += fw * mis * cv(n, a);
        }
        u /= el.volume * state.system.mass_density;
        const Index nb = m / 3;
        for (Index a = 0; a < m; ++a)
          for (Index b = 0; b < m; ++b) {
            Real v = 0;
            if (b % nb == 0) v += u[a] / 2;
            if (a % nb == 0) v += u[b] / 2;
            gm(a, b) += v;
          }
      }
    } else {
      // Factor mode: entry-wise multiplicative update factor, time
      // integrals by the right-endpoint rule, backward differences for the
      // adjoint rate, signs oriented to the descent direction of the
      // discrete objective.
      Matrix im = Matrix::Zero(m, m), ia = Matrix::Zero(m, m);
      for (int n = 1; n <= N; ++n)
        for (Index i = 0; i < m; ++i) {
          const Real c = cv(n, i);
          if (c == 0) continue;
          for (Index j = 0; j < m; ++j) {
            im(i, j) += (wv(n, j) - wv(n - 1, j)) * c;
            ia(i, j) += dt * wv(n, j) * c;
          }
        }
      gm += m_sym.cwiseProduct(im);
      ga -= a_sym.cwiseProduct(ia);
    }

    grads.mass.push_back(std::move(gm));
    grads.stiffness.push_back(std::move(ga));
  }
  return grads;
}

void step(InversionState& state, const BlockGradients& grads,
          const InversionConfig& config) {
  if (grads.mass.size() != state.system.elements.size() ||
      grads.stiffness.size() != state.system.elements.size())
    throw InvalidArgument("step: gradient/block count mismatch");

  std::vector<Matrix> saved_mass, saved_stiffness;
  saved_mass.reserve(config.update_mask.size());
  saved_stiffness.reserve(config.update_mask.size());
  for (int k : config.update_mask) {
    saved_mass.push_back(state.system.elements[static_cast<size_t>(k)].mass);
    saved_stiffness.push_back(
        state.system.elements[static_cast<size_t>(k)].stiffness);
  }

  auto restore = [&] {
    for (size_t i = 0; i < config.update_mask.size(); ++i) {
      auto& el = state.system.elements[static_cast<size_t>(config.update_mask[i])];
      el.mass = saved_mass[i];
      el.stiffness = saved_stiffness[i];
    }
  };

  const Real dt = state.t_final / state.n_steps;
  Real eps = config.epsilon;
  for (int attempt = 0;; ++attempt) {
    for (size_t i = 0; i < config.update_mask.size(); ++i) {
      auto& el = state.system.elements[static_cast<size_t>(config.update_mask[i])];
      el.mass = symmetrized(saved_mass[i] -
                            eps * grads.mass[static_cast<size_t>(config.update_mask[i])]);
      el.stiffness = symmetrized(
          saved_stiffness[i] -
          eps * grads.stiffness[static_cast<size_t>(config.update_mask[i])]);
    }
    state.system.rebuild_globals();

    const CoarseOperators ops = eliminated_operators(state.system);
    SparseSymMatrix s(
        SparseMatrix(ops.mass.matrix() + dt * ops.stiffness.matrix()));
    SparseCholesky probe;
    if (probe.try_compute(s)) break; // step accepted

    restore();
    if (!config.halve_on_reject) {
      state.system.rebuild_globals();
      throw StepRejected(
          "step: updated operators lost positive definiteness at iterate " +
          std::to_string(state.iterate) + "; reduce epsilon");
    }
    state.any_rejection = true;
    eps /= 2;
    if (attempt >= 120 || eps == 0) {
      state.system.rebuild_globals();
      throw StepRejected("step: halving exhausted at iterate " +
                         std::to_string(state.iterate));
    }
  }
  state.forward_current = false;
  state.adjoint_current = false;
}

InversionResult run_inversion(const CoarseSystem& prior,
                              const MultiscaleSpace& space,
                              const FineMesh& fine,
                              const AssemblyParams& params,
                              const InversionConfig& config,
                              const ObservationSeries& data) {
  InversionState state = make_state(prior, space, fine, params, config, data);
  for (int it = 0;; ++it) {
    const ObjectiveTerms terms = objective(state, config, data);
    state.history.push_back(terms);
    if (it > 0) {
      const Real prev = state.history[state.history.size() - 2].j;
      if (std::abs(terms.j - prev) <=
          config.j_rel_tol * std::max(std::abs(prev), std::abs(terms.j)))
        break;
    }
    if (it == config.n_iter) break;
    solve_adjoint(state, config, data);
    const BlockGradients grads = gradient(state, config);
    step(state, grads, config);
    refresh_forward(state, config, data);
    state.iterate = it + 1;
  }
  return {state, state.history};
}

ErrorReport error_report(const InversionState& final_state,
                         const CoarseSystem& prior,
                         const std::vector<Vector>& truth_states,
                         const FineMesh& fine, const AssemblyParams& params) {
  if (!final_state.forward_current)
    throw StateError("error_report: forward trajectory is stale");
  const int n_elements = static_cast<int>(prior.elements.size());
  std::vector<int> all(static_cast<size_t>(n_elements));
  std::iota(all.begin(), all.end(), 0);

  const CoarseOperators prior_ops = eliminated_operators(prior);
  const Trajectory prior_traj =
      integrate(prior_ops.mass, prior_ops.stiffness, prior_ops.load,
                final_state.c0, final_state.t_final, final_state.n_steps);

  const Matrix truth = fine_cell_averages(fine, truth_states, all);
  const Matrix initial = cell_averages(prior, prior_traj.states, all);
  const Matrix final_avg =
      cell_averages(final_state.system, final_state.forward.states, all);
  (void)params;

  const int cols = static_cast<int>(truth.cols());
  ErrorReport report;
  report.initial.resize(cols);
  report.final_model.resize(cols);
  const Real dt = final_state.t_final / final_state.n_steps;
  Real acc_i = 0, acc_f = 0;
  for (int n = 0; n < cols; ++n) {
    Real si = 0, sf = 0;
    for (int k = 0; k < n_elements; ++k) {
      const Real di = initial(k, n) - truth(k, n);
      const Real df = final_avg(k, n) - truth(k, n);
      si += di * di;
      sf += df * df;
    }
    report.initial[n] = std::sqrt(si / n_elements);
    report.final_model[n] = std::sqrt(sf / n_elements);
    if (n >= 1) {
      acc_i += dt * si / n_elements;
      acc_f += dt * sf / n_elements;
    }
  }
  report.aggregate_initial = std::sqrt(acc_i);
  report.aggregate_final = std::sqrt(acc_f);
  return report;
}

void write_history_csv(const std::vector<ObjectiveTerms>& history,
                       const std::string& path) {
  auto out = detail::open_output(path);
  out << "iteration,J,term_M,term_A,term_F\n";
  for (size_t i = 0; i < history.size(); ++i)
    out << i << ',' << detail::format_real(history[i].j) << ','
        << detail::format_real(history[i].term_m) << ','
        << detail::format_real(history[i].term_a) << ','
        << detail::format_real(history[i].term_f) << '\n';
}

void write_error_csv(const ErrorReport& report, const std::string& path) {
  auto out = detail::open_output(path);
  out << "time_index,l2_error_initial,l2_error_final\n";
  for (Index n = 0; n < report.initial.size(); ++n)
    out << n << ',' << detail::format_real(report.initial[n]) << ','
        << detail::format_real(report.final_model[n]) << '\n';
}

} // namespace msinv
