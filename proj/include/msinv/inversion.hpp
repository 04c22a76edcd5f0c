#pragma once

#include <vector>

#include "msinv/forward.hpp"

namespace msinv {

// `factor` applies the multiplicative block-entry update factors directly;
// `consistent` is the exact gradient of the discrete objective, validated
// against finite differences.
enum class GradientMode { factor, consistent };

struct InversionConfig {
  Real sigma_M = 1;
  Real sigma_A = 1;
  Real sigma_F = 1e4;
  Real epsilon = 1e-12;
  int n_iter = 100;
  Real j_rel_tol = 1e-10;
  GradientMode gradient_mode = GradientMode::consistent;
  bool halve_on_reject = false;
  std::vector<int> update_mask;    // coarse elements whose blocks move
  std::vector<int> observed_cells; // must equal the data's cell set

  void validate(int n_elements) const; // throws InvalidArgument
};

struct ObjectiveTerms {
  Real j = 0;
  Real term_m = 0;
  Real term_a = 0;
  Real term_f = 0;
};

struct BlockGradients {
  std::vector<Matrix> mass;      // per coarse element
  std::vector<Matrix> stiffness; // per coarse element
};

// Everything the descent loop owns. The initial coarse state is computed
// once from the prior system and kept fixed across iterations so that the
// objective depends on the blocks only through the time stepping and the
// observation weights.
struct InversionState {
  CoarseSystem system; // current blocks and their assembled globals
  std::vector<Matrix> prior_mass;
  std::vector<Matrix> prior_stiffness;
  Vector c0;
  Real t_final = 0;
  int n_steps = 0;
  Trajectory forward;
  Trajectory adjoint;
  Matrix model_values; // observed-cell averages, cells x (n_steps+1)
  Matrix misfit;       // model minus data
  std::vector<ObjectiveTerms> history;
  int iterate = 0;
  bool any_rejection = false;
  bool forward_current = false;
  bool adjoint_current = false;
};

// Builds the loop state around the prior system and runs the first forward
// solve.
InversionState make_state(const CoarseSystem& prior,
                          const MultiscaleSpace& space, const FineMesh& fine,
                          const AssemblyParams& params,
                          const InversionConfig& config,
                          const ObservationSeries& data);

// Forward solve + model observables + misfit for the current blocks.
void refresh_forward(InversionState& state, const InversionConfig& config,
                     const ObservationSeries& data);

// J and its three terms for the current state; requires a fresh forward
// trajectory (StateError otherwise).
ObjectiveTerms objective(const InversionState& state,
                         const InversionConfig& config,
                         const ObservationSeries& data);

// Discrete adjoint: backward sweep with the transposed time-step operator,
// source 2/sigma_F^2 * dt * F^T(F c - g) per step, terminal value zero.
void solve_adjoint(InversionState& state, const InversionConfig& config,
                   const ObservationSeries& data);

// Per-element gradient blocks in the configured mode; blocks outside the
// update mask are zero.
BlockGradients gradient(const InversionState& state,
                        const InversionConfig& config);

// In-mask update B -= eps * dB followed by symmetrization, then reassembly
// of the globals. SPD of the time-step operator is probed immediately; on
// failure the step is rolled back and either retried with halved eps
// (halve_on_reject) or rejected with StepRejected.
void step(InversionState& state, const BlockGradients& grads,
          const InversionConfig& config);

struct InversionResult {
  InversionState state;
  std::vector<ObjectiveTerms> history;
};

// Full descent loop: forward, objective, adjoint, gradient, step; stops at
// n_iter or when the relative J change drops below j_rel_tol.
InversionResult run_inversion(const CoarseSystem& prior,
                              const MultiscaleSpace& space,
                              const FineMesh& fine,
                              const AssemblyParams& params,
                              const InversionConfig& config,
                              const ObservationSeries& data);

// RMS-over-cells cell-average error against a fine truth trajectory, per
// time index, for the prior (initial) and current (final) models, plus
// right-endpoint time aggregates.
struct ErrorReport {
  Vector initial;
  Vector final_model;
  Real aggregate_initial = 0;
  Real aggregate_final = 0;
};

ErrorReport error_report(const InversionState& final_state,
                         const CoarseSystem& prior,
                         const std::vector<Vector>& truth_states,
                         const FineMesh& fine, const AssemblyParams& params);

void write_history_csv(const std::vector<ObjectiveTerms>& history,
                       const std::string& path);
void write_error_csv(const ErrorReport& report, const std::string& path);

} // namespace msinv
