// Standalone acceptance gate. Runs ten end-to-end checks against the shipped
// case configurations and prints one verdict line per check; exits nonzero
// when any of them fails. Usage: acceptance [cases_dir]
//
// Every tolerance is pinned here in code. Check 9 documents a measured
// property of the two-channel geometry that contradicts its target count;
// it is reported honestly (see README.md, "Known limitations").

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "msinv/config.hpp"
#include "msinv/errors.hpp"
#include "msinv/experiment.hpp"
#include "msinv/forward.hpp"
#include "msinv/gmsfem.hpp"
#include "msinv/inversion.hpp"

using namespace msinv;

namespace {

// ---------------------------------------------------------------------------
// Small utilities
// ---------------------------------------------------------------------------

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(Real v, int digits = 3) {
  std::ostringstream os;
  os << std::setprecision(digits) << v;
  return os.str();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("acceptance: cannot read " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

FractureNetwork one_fracture(Real x0, Real y0, Real x1, Real y1) {
  FractureNetwork net;
  net.segments.push_back({{x0, y0}, {x1, y1}});
  return net;
}

FractureNetwork load_network(const std::string& path) {
  if (path.empty()) return {};
  return read_fracture_file(path);
}

// ---------------------------------------------------------------------------
// In-memory replica of the run_case pipeline (no files written), keeping the
// pieces the checks need afterwards.
// ---------------------------------------------------------------------------

struct DeskRun {
  std::vector<int> observed;
  std::vector<int> mask;
  CoarseSystem prior;
  InversionResult result;
  ErrorReport report;
  double wall = 0;

  const std::vector<ObjectiveTerms>& history() const { return result.history; }
  Real j_initial() const { return result.history.front().j; }
  Real j_final() const { return result.history.back().j; }
};

DeskRun run_desk(const ExperimentConfig& cfg) {
  const auto t0 = Clock::now();
  cfg.params.validate();
  const CoarseMesh coarse = build_coarse_mesh(cfg.coarse_n);

  DeskRun r;
  r.observed = cfg.observed_spec.resolve(coarse);
  r.mask = cfg.update_spec.resolve(coarse);

  const FineMesh fine_truth =
      build_fine_mesh(coarse, cfg.refine_r, load_network(cfg.true_fractures));
  const Trajectory truth = fine_reference_solve(fine_truth, cfg.params);
  const ObservationSeries data = make_observations(
      fine_truth, truth.states, r.observed, cfg.noise_delta, cfg.seed);

  const FineMesh fine_prior =
      build_fine_mesh(coarse, cfg.refine_r, load_network(cfg.prior_fractures));
  const MultiscaleSpace space =
      build_space(fine_prior, coarse, cfg.params, cfg.n_bases);
  r.prior = assemble_coarse(space, fine_prior, coarse, cfg.params);

  InversionConfig inv = cfg.inversion;
  inv.observed_cells = r.observed;
  inv.update_mask = r.mask;

  r.result = run_inversion(r.prior, space, fine_prior, cfg.params, inv, data);
  r.report =
      error_report(r.result.state, r.prior, truth.states, fine_truth, cfg.params);
  r.wall = seconds_since(t0);
  return r;
}

// ---------------------------------------------------------------------------
// Verdict bookkeeping
// ---------------------------------------------------------------------------

struct Verdict {
  bool pass = false;
  std::string detail;                // appended to the verdict line
  std::vector<std::string> notes;    // extra indented lines (failures only)
};

int g_failures = 0;

void run_check(int id, const std::string& what,
               const std::function<Verdict()>& body) {
  Verdict v;
  try {
    v = body();
  } catch (const std::exception& e) {
    v.pass = false;
    v.detail = std::string("exception: ") + e.what();
  }
  std::cout << "[" << std::setw(2) << id << "] " << (v.pass ? "PASS" : "FAIL")
            << "  " << what;
  if (!v.detail.empty()) std::cout << "  (" << v.detail << ")";
  std::cout << "\n";
  for (const auto& n : v.notes) std::cout << "      " << n << "\n";
  std::cout.flush();
  if (!v.pass) ++g_failures;
}

// Shared results, filled as the checks run in order.
struct Shared {
  std::string cases;
  std::optional<ExperimentConfig> cfg1, cfg2, cfg3;
  std::optional<DeskRun> case1_nb2, case1_nb4, case2_masked, case3;
  double case1_pair_seconds = 0;
};

std::string case_path(const Shared& sh, const std::string& name) {
  return (std::filesystem::path(sh.cases) / name).string();
}

// ---------------------------------------------------------------------------
// Check 1: the first basis of every coarse vertex is the partition-of-unity
// function; their sum must be exactly one at every interior fine vertex, on
// all three prior geometries and for every supported basis count.
// ---------------------------------------------------------------------------

Verdict check_partition_of_unity(Shared& sh) {
  const auto t0 = Clock::now();
  Verdict v;
  Real worst = 0;
  int spaces = 0;

  for (const auto* cfg : {&*sh.cfg1, &*sh.cfg2, &*sh.cfg3}) {
    const CoarseMesh coarse = build_coarse_mesh(cfg->coarse_n);
    const FineMesh fine =
        build_fine_mesh(coarse, cfg->refine_r, load_network(cfg->prior_fractures));
    for (int nb : {1, 2, 4}) {
      const MultiscaleSpace space = build_space(fine, coarse, cfg->params, nb);
      Vector sum = Vector::Zero(fine.vertex_count());
      for (int i = 0; i < coarse.vertex_count(); ++i) sum += space.basis(i, 0);
      for (int vtx = 0; vtx < fine.vertex_count(); ++vtx)
        if (fine.boundary_tags[static_cast<size_t>(vtx)] == BoundaryTag::interior)
          worst = std::max(worst, std::abs(sum[vtx] - 1.0));
      ++spaces;
    }
  }

  const double wall = seconds_since(t0);
  v.pass = worst <= 1e-12 && wall < 60.0;
  v.detail = std::to_string(spaces) + " spaces, max |sum-1| = " + fmt(worst) +
             ", " + fmt(wall, 2) + " s";
  return v;
}

// ---------------------------------------------------------------------------
// Check 2: projected element blocks against a dense brute force that uses
// its own triangle mass/stiffness formulas and its own fracture-edge
// ownership rule (smaller adjacent coarse element id wins).
// ---------------------------------------------------------------------------

Verdict check_element_blocks() {
  Verdict v;
  const CoarseMesh coarse = build_coarse_mesh(2);
  AssemblyParams params; // defaults: k_m = 1e-3, k_f = 1e2, c_m = 1
  const FineMesh fine =
      build_fine_mesh(coarse, 4, one_fracture(0.15, 0.2, 0.85, 0.55));
  const int nv = fine.vertex_count();

  // Own edge-to-triangle adjacency for the ownership rule.
  std::map<std::pair<int, int>, std::vector<int>> edge_tris;
  for (int t = 0; t < fine.element_count(); ++t) {
    const auto& e = fine.elements[static_cast<size_t>(t)];
    for (int k = 0; k < 3; ++k) {
      const int a = e[k], b = e[(k + 1) % 3];
      edge_tris[{std::min(a, b), std::max(a, b)}].push_back(t);
    }
  }

  Real worst = 0;
  for (int nb : {1, 2, 4}) {
    const MultiscaleSpace space = build_space(fine, coarse, params, nb);
    const CoarseSystem sys = assemble_coarse(space, fine, coarse, params);

    for (const auto& el : sys.elements) {
      const int K = el.element;
      Matrix mf = Matrix::Zero(nv, nv);
      Matrix af = Matrix::Zero(nv, nv);

      for (int t : fine.coarse_to_fine[static_cast<size_t>(K)]) {
        const auto& e = fine.elements[static_cast<size_t>(t)];
        const Vector2& q0 = fine.vertices[e[0]];
        const Vector2& q1 = fine.vertices[e[1]];
        const Vector2& q2 = fine.vertices[e[2]];
        const Real area2 = (q1.x() - q0.x()) * (q2.y() - q0.y()) -
                           (q2.x() - q0.x()) * (q1.y() - q0.y());
        const Real area = area2 / 2;
        const Real b[3] = {q1.y() - q2.y(), q2.y() - q0.y(), q0.y() - q1.y()};
        const Real c[3] = {q2.x() - q1.x(), q0.x() - q2.x(), q1.x() - q0.x()};
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 3; ++j) {
            af(e[i], e[j]) += params.k_m * (b[i] * b[j] + c[i] * c[j]) / (2 * area2);
            mf(e[i], e[j]) += params.c_m * area / 12 * (i == j ? 2 : 1);
          }
      }

      for (const auto& fe : fine.fracture_edges) {
        const auto& adj =
            edge_tris.at({std::min(fe.v0, fe.v1), std::max(fe.v0, fe.v1)});
        int owner = std::numeric_limits<int>::max();
        for (int t : adj)
          owner = std::min(owner, fine.coarse_element_of[static_cast<size_t>(t)]);
        if (owner != K) continue;
        const Real len = (fine.vertices[fe.v1] - fine.vertices[fe.v0]).norm();
        const Real w = params.k_f / len;
        af(fe.v0, fe.v0) += w;
        af(fe.v1, fe.v1) += w;
        af(fe.v0, fe.v1) -= w;
        af(fe.v1, fe.v0) -= w;
      }

      Matrix phi(nv, 3 * nb);
      for (int c = 0; c < 3; ++c)
        for (int j = 0; j < nb; ++j)
          phi.col(c * nb + j) = space.basis(el.corners[static_cast<size_t>(c)], j);

      Matrix mref = phi.transpose() * mf * phi;
      Matrix aref = phi.transpose() * af * phi;
      mref = ((mref + mref.transpose()) / 2).eval();
      aref = ((aref + aref.transpose()) / 2).eval();

      const Real mscale = std::max<Real>(1, mref.cwiseAbs().maxCoeff());
      const Real ascale = std::max<Real>(1, aref.cwiseAbs().maxCoeff());
      const Real dm = (el.mass - mref).cwiseAbs().maxCoeff() / mscale;
      const Real da = (el.stiffness - aref).cwiseAbs().maxCoeff() / ascale;
      worst = std::max({worst, dm, da});
    }
  }

  v.pass = worst <= 1e-12;
  v.detail = "basis counts {1,2,4}, max block deviation = " + fmt(worst);
  return v;
}

// ---------------------------------------------------------------------------
// Check 3: the consistent gradient against central finite differences of the
// objective, at a point moved off the prior, on randomly drawn block entries.
// ---------------------------------------------------------------------------

Verdict check_gradient_fd() {
  Verdict v;
  AssemblyParams params;
  params.T = 1.0;
  params.n_t = 4;
  const CoarseMesh coarse = build_coarse_mesh(2);
  const FineMesh fine_truth =
      build_fine_mesh(coarse, 4, one_fracture(0.15, 0.2, 0.85, 0.75));
  const FineMesh fine_prior =
      build_fine_mesh(coarse, 4, one_fracture(0.15, 0.25, 0.85, 0.80));
  const int nb = 2;
  const MultiscaleSpace space = build_space(fine_prior, coarse, params, nb);
  const CoarseSystem prior = assemble_coarse(space, fine_prior, coarse, params);

  InversionConfig cfg;
  cfg.sigma_M = 1;
  cfg.sigma_A = 1;
  cfg.sigma_F = 1;
  cfg.gradient_mode = GradientMode::consistent;
  cfg.observed_cells.resize(static_cast<size_t>(coarse.element_count()));
  std::iota(cfg.observed_cells.begin(), cfg.observed_cells.end(), 0);
  cfg.update_mask = cfg.observed_cells;

  const Trajectory truth = fine_reference_solve(fine_truth, params);
  const ObservationSeries data = make_observations(
      fine_truth, truth.states, cfg.observed_cells, 0.03, 12345);

  InversionState state =
      make_state(prior, space, fine_prior, params, cfg, data);

  // Move off the prior so the regularization terms contribute too.
  const int d = 3 * nb;
  Matrix bump = Matrix::Zero(d, d);
  bump(0, 3) = bump(3, 0) = 2e-5;
  bump(4, 4) = -1e-5;
  state.system.elements[1].mass += bump;
  state.system.elements[6].stiffness += 0.5 * bump;
  state.system.rebuild_globals();
  refresh_forward(state, cfg, data);
  solve_adjoint(state, cfg, data);
  const BlockGradients grads = gradient(state, cfg);

  std::mt19937_64 rng(987654321ull);
  std::uniform_int_distribution<int> pick_k(0, coarse.element_count() - 1);
  std::uniform_int_distribution<int> pick_i(0, d - 1);

  Real worst = 0;
  std::string worst_entry;
  // Central-difference step: large enough that the objective's rounding
  // noise (about machine epsilon times J per evaluation, here J ~ 1e0)
  // stays two orders below the pinned tolerance, small enough that the
  // quadratic truncation term is negligible on this instance.
  const Real h = 1e-5;
  const auto probe = [&](bool mass) {
    const int K = pick_k(rng);
    const Index a = pick_i(rng), b = pick_i(rng);
    Matrix e = Matrix::Zero(d, d);
    if (a == b)
      e(a, a) = 1;
    else
      e(a, b) = e(b, a) = 0.5;

    InversionState plus = state, minus = state;
    auto& bp = mass ? plus.system.elements[static_cast<size_t>(K)].mass
                    : plus.system.elements[static_cast<size_t>(K)].stiffness;
    auto& bm = mass ? minus.system.elements[static_cast<size_t>(K)].mass
                    : minus.system.elements[static_cast<size_t>(K)].stiffness;
    bp += h * e;
    bm -= h * e;
    plus.system.rebuild_globals();
    minus.system.rebuild_globals();
    refresh_forward(plus, cfg, data);
    refresh_forward(minus, cfg, data);
    const Real fd =
        (objective(plus, cfg, data).j - objective(minus, cfg, data).j) / (2 * h);
    const Matrix& g = mass ? grads.mass[static_cast<size_t>(K)]
                           : grads.stiffness[static_cast<size_t>(K)];
    const Real directional = (g.array() * e.array()).sum();
    const Real scale = std::max({std::abs(fd), std::abs(directional), Real(1e-8)});
    const Real rel = std::abs(fd - directional) / scale;
    if (rel > worst) {
      worst = rel;
      std::ostringstream os;
      os << (mass ? "mass" : "stiffness") << " block " << K << " entry (" << a
         << "," << b << "): fd " << fmt(fd, 6) << " vs gradient "
         << fmt(directional, 6);
      worst_entry = os.str();
    }
  };

  const int n_probes = 24;
  for (int i = 0; i < n_probes; ++i) probe(true);
  for (int i = 0; i < n_probes; ++i) probe(false);

  v.pass = worst <= 1e-5;
  v.detail = std::to_string(2 * n_probes) +
             " random entries, max relative deviation = " + fmt(worst);
  if (!v.pass) v.notes.push_back("worst entry: " + worst_entry);
  return v;
}

// ---------------------------------------------------------------------------
// Check 4: the first desk case runs its full fixed-step budget with a
// non-increasing objective, for both shipped basis counts.
// ---------------------------------------------------------------------------

Verdict check_descent(Shared& sh) {
  const auto t0 = Clock::now();
  Verdict v;

  sh.case1_nb2 = run_desk(*sh.cfg1);
  ExperimentConfig cfg4 = *sh.cfg1;
  cfg4.apply_override("n_bases", "4");
  sh.case1_nb4 = run_desk(cfg4);
  sh.case1_pair_seconds = seconds_since(t0);

  int rises = 0;
  Real worst_rise = 0;
  bool full_budget = true;
  for (const DeskRun* run : {&*sh.case1_nb2, &*sh.case1_nb4}) {
    const auto& h = run->history();
    full_budget = full_budget &&
                  h.size() == static_cast<size_t>(sh.cfg1->inversion.n_iter) + 1;
    for (size_t k = 0; k + 1 < h.size(); ++k)
      if (h[k + 1].j > h[k].j * (1 + 1e-12)) {
        ++rises;
        worst_rise = std::max(worst_rise, h[k + 1].j / h[k].j - 1);
      }
  }

  v.pass = rises == 0 && full_budget && sh.case1_pair_seconds < 300.0;
  v.detail = "2 bases: J " + fmt(sh.case1_nb2->j_initial(), 4) + " -> " +
             fmt(sh.case1_nb2->j_final(), 4) + "; 4 bases: J " +
             fmt(sh.case1_nb4->j_initial(), 4) + " -> " +
             fmt(sh.case1_nb4->j_final(), 4) + "; rises = " +
             std::to_string(rises) + ", " + fmt(sh.case1_pair_seconds, 2) + " s";
  if (!full_budget) v.notes.push_back("a run stopped before its iteration budget");
  if (rises > 0) v.notes.push_back("worst relative rise = " + fmt(worst_rise));
  return v;
}

// ---------------------------------------------------------------------------
// Check 5: on all three noiseless desk cases the recovered model's
// cell-average error beats the prior at every time step (the stepped states
// n >= 1; the t = 0 state precedes the first step). The four-basis space
// must also end at least as accurate as the two-basis one on case 1.
// ---------------------------------------------------------------------------

Verdict check_error_reduction(Shared& sh) {
  Verdict v;
  sh.case2_masked = run_desk(*sh.cfg2);
  sh.case3 = run_desk(*sh.cfg3);

  v.pass = true;
  const char* names[3] = {"case 1", "case 2", "case 3"};
  const DeskRun* runs[3] = {&*sh.case1_nb2, &*sh.case2_masked, &*sh.case3};
  std::string agg;
  for (int c = 0; c < 3; ++c) {
    const ErrorReport& rep = runs[c]->report;
    for (Index n = 1; n < rep.initial.size(); ++n)
      if (rep.final_model[n] > rep.initial[n]) {
        v.pass = false;
        v.notes.push_back(std::string(names[c]) + ": error at step " +
                          std::to_string(n) + " grew from " +
                          fmt(rep.initial[n]) + " to " + fmt(rep.final_model[n]));
      }
    if (rep.aggregate_final > rep.aggregate_initial) {
      v.pass = false;
      v.notes.push_back(std::string(names[c]) + ": aggregate error grew");
    }
    agg += std::string(c ? "; " : "") + names[c] + " " +
           fmt(rep.aggregate_initial, 3) + " -> " + fmt(rep.aggregate_final, 3);
  }

  const ErrorReport& r2 = sh.case1_nb2->report;
  const ErrorReport& r4 = sh.case1_nb4->report;
  for (Index n = 1; n < r2.final_model.size(); ++n)
    if (r4.final_model[n] > r2.final_model[n]) {
      v.pass = false;
      v.notes.push_back("case 1: 4-basis final error exceeds 2-basis at step " +
                        std::to_string(n));
    }
  if (r4.aggregate_final > r2.aggregate_final) {
    v.pass = false;
    v.notes.push_back("case 1: 4-basis aggregate final error exceeds 2-basis");
  }

  v.detail = "aggregate errors: " + agg;
  return v;
}

// ---------------------------------------------------------------------------
// Check 6: increasing multiplicative observation noise never improves the
// final objective or the final aggregate error, and every noisy run
// completes without a rejected step.
// ---------------------------------------------------------------------------

Verdict check_noise_monotonicity(Shared& sh) {
  Verdict v;
  v.pass = true;

  Real prev_j = sh.case1_nb2->j_final();
  Real prev_e = sh.case1_nb2->report.aggregate_final;
  std::string chain = "0%: J " + fmt(prev_j, 3);

  for (const char* delta : {"0.01", "0.03", "0.05", "0.1"}) {
    ExperimentConfig cfg = *sh.cfg1;
    cfg.apply_override("noise_delta", delta);
    const DeskRun run = run_desk(cfg);
    const Real jf = run.j_final();
    const Real ef = run.report.aggregate_final;
    if (run.result.state.any_rejection) {
      v.pass = false;
      v.notes.push_back(std::string("noise ") + delta + ": a step was rejected");
    }
    if (jf < prev_j || ef < prev_e) {
      v.pass = false;
      v.notes.push_back(std::string("noise ") + delta +
                        ": final J or aggregate error decreased (J " + fmt(jf) +
                        " vs " + fmt(prev_j) + ", err " + fmt(ef) + " vs " +
                        fmt(prev_e) + ")");
    }
    chain += ", " + std::string(delta) + ": J " + fmt(jf, 3);
    prev_j = jf;
    prev_e = ef;
  }

  v.detail = chain;
  return v;
}

// ---------------------------------------------------------------------------
// Check 7: restricting the update to a sub-rectangle leaves every block
// outside it bitwise identical to the prior, still converges, and ends
// within a factor two of the full-domain objective.
// ---------------------------------------------------------------------------

Verdict check_masked_update(Shared& sh) {
  Verdict v;
  const DeskRun& masked = *sh.case2_masked;

  ExperimentConfig cfg_full = *sh.cfg2;
  cfg_full.apply_override("update_mask", "all");
  const DeskRun full = run_desk(cfg_full);

  bool converged = !masked.result.state.any_rejection &&
                   !full.result.state.any_rejection &&
                   masked.j_final() <= masked.j_initial() &&
                   full.j_final() <= full.j_initial();

  std::set<int> in_mask(masked.mask.begin(), masked.mask.end());
  int frozen = 0, touched = 0;
  for (size_t K = 0; K < masked.prior.elements.size(); ++K) {
    if (in_mask.count(static_cast<int>(K))) continue;
    ++frozen;
    const auto& cur = masked.result.state.system.elements[K];
    const auto& pri = masked.prior.elements[K];
    const bool same_m = (cur.mass.array() == pri.mass.array()).all();
    const bool same_a = (cur.stiffness.array() == pri.stiffness.array()).all();
    if (!same_m || !same_a) ++touched;
  }

  const Real ratio = std::max(masked.j_final(), full.j_final()) /
                     std::min(masked.j_final(), full.j_final());

  v.pass = converged && touched == 0 && ratio <= 2.0;
  v.detail = std::to_string(frozen) + " out-of-mask blocks bit-identical, " +
             "final J masked/full = " + fmt(masked.j_final(), 3) + "/" +
             fmt(full.j_final(), 3) + ", ratio " + fmt(ratio, 3);
  if (!converged) v.notes.push_back("a run rejected a step or ended above its start");
  if (touched > 0)
    v.notes.push_back(std::to_string(touched) + " out-of-mask blocks changed");
  return v;
}

// ---------------------------------------------------------------------------
// Check 8: the implicit Euler integrator is first-order accurate: halving
// the step size halves the terminal error on a 3-dof problem with a closed
// form computed through an independent dense generalized eigensolve.
// ---------------------------------------------------------------------------

Verdict check_time_stepper_order() {
  Verdict v;
  Matrix md(3, 3), ad(3, 3);
  md << 2.0, 0.3, 0.1, 0.3, 1.5, 0.2, 0.1, 0.2, 1.0;
  ad << 3.0, 0.5, 0.2, 0.5, 2.0, 0.4, 0.2, 0.4, 1.5;
  Vector b(3), c0(3);
  b << 0.3, -0.2, 0.5;
  c0 << 1.0, -1.0, 0.5;
  const Real T = 1.0;

  const auto to_sparse = [](const Matrix& dense) {
    SymmetricAssembler assembler(dense.rows());
    for (Index i = 0; i < dense.rows(); ++i)
      for (Index j = i; j < dense.cols(); ++j)
        if (dense(i, j) != 0) assembler.add(i, j, dense(i, j));
    return assembler.finalize();
  };
  const SparseSymMatrix m = to_sparse(md);
  const SparseSymMatrix a = to_sparse(ad);

  // Closed form in the (A, M) eigenbasis: with V^T M V = I and A V = M V L,
  // the modal coordinates satisfy y' + L y = V^T b.
  Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> ges(ad, md);
  if (ges.info() != Eigen::Success) throw SolverError("dense eigensolve failed");
  const Matrix V = ges.eigenvectors();
  const Vector lam = ges.eigenvalues();
  const Vector y0 = V.transpose() * (md * c0);
  const Vector beta = V.transpose() * b;
  Vector yT(3);
  for (Index i = 0; i < 3; ++i) {
    const Real rest = beta[i] / lam[i];
    yT[i] = rest + std::exp(-lam[i] * T) * (y0[i] - rest);
  }
  const Vector exact = V * yT;

  const auto terminal_error = [&](int n_steps) {
    const Trajectory traj = integrate(m, a, b, c0, T, n_steps);
    return (traj.states.back() - exact).norm();
  };
  const Real e_coarse = terminal_error(500);
  const Real e_fine = terminal_error(1000);
  const Real ratio = e_coarse / e_fine;

  v.pass = ratio >= 1.8 && ratio <= 2.2;
  v.detail = "errors " + fmt(e_coarse) + " (n=500) / " + fmt(e_fine) +
             " (n=1000), ratio " + fmt(ratio, 4);
  return v;
}

// ---------------------------------------------------------------------------
// Check 9: target spectral count on the two-channel neighborhood. The
// library spectrum is first cross-checked against an independent dense
// assembly and eigensolve, then the pinned count predicate is evaluated.
// ---------------------------------------------------------------------------

struct PatchSpectrum {
  Vector lib;    // library route
  Vector oracle; // independent dense route
  int components = 0;
};

PatchSpectrum patch_spectrum(const FractureNetwork& net) {
  AssemblyParams params; // defaults: k_m = 1e-3, k_f = 1e2
  const CoarseMesh coarse = build_coarse_mesh(2);
  const FineMesh fine = build_fine_mesh(coarse, 8, net);
  const int vertex = coarse.vertex_id(1, 1);

  const auto snaps = compute_snapshots(fine, coarse, vertex, params);
  PatchSpectrum out;
  out.lib = local_spectral_basis(snaps, fine, coarse, vertex, params, 1)
                .eigenvalues;

  // Independent dense route: own weight fields from the chi functions, own
  // dense patch forms, Eigen's dense generalized eigensolver.
  const auto pou = detail::build_partition_of_unity(fine, coarse, params);
  const std::vector<int> tris = neighborhood_elements(fine, coarse, vertex);
  const int nv = fine.vertex_count();

  std::set<std::pair<int, int>> tri_edges;
  for (int t : tris) {
    const auto& e = fine.elements[static_cast<size_t>(t)];
    for (int k = 0; k < 3; ++k) {
      const int a = e[k], b = e[(k + 1) % 3];
      tri_edges.insert({std::min(a, b), std::max(a, b)});
    }
  }

  Matrix a_dense = Matrix::Zero(nv, nv);
  Matrix s_dense = Matrix::Zero(nv, nv);

  for (int t : tris) {
    const auto& e = fine.elements[static_cast<size_t>(t)];
    const Vector2& q0 = fine.vertices[e[0]];
    const Vector2& q1 = fine.vertices[e[1]];
    const Vector2& q2 = fine.vertices[e[2]];
    const Real area2 = (q1.x() - q0.x()) * (q2.y() - q0.y()) -
                       (q2.x() - q0.x()) * (q1.y() - q0.y());
    const Real area = area2 / 2;
    const Real bb[3] = {q1.y() - q2.y(), q2.y() - q0.y(), q0.y() - q1.y()};
    const Real cc[3] = {q2.x() - q1.x(), q0.x() - q2.x(), q1.x() - q0.x()};

    // Weight: conductivity times the summed squared gradients of the chi
    // functions of the owning coarse element's corners, recomputed here.
    const int K = fine.coarse_element_of[static_cast<size_t>(t)];
    Real wsum = 0;
    for (int corner : coarse.elements[static_cast<size_t>(K)]) {
      const Vector& chi = pou.chi[static_cast<size_t>(corner)];
      Real gx = 0, gy = 0;
      for (int k = 0; k < 3; ++k) {
        gx += bb[k] * chi[e[k]];
        gy += cc[k] * chi[e[k]];
      }
      wsum += (gx * gx + gy * gy) / (area2 * area2);
    }
    const Real w = params.k_m * wsum;

    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        a_dense(e[i], e[j]) +=
            params.k_m * (bb[i] * bb[j] + cc[i] * cc[j]) / (2 * area2);
        s_dense(e[i], e[j]) += w * area / 12 * (i == j ? 2 : 1);
      }
  }

  // Adjacency for the chi set alive at an edge and for connectivity.
  std::vector<std::vector<int>> vertex_tris(static_cast<size_t>(nv));
  for (int t = 0; t < fine.element_count(); ++t)
    for (int vv : fine.elements[static_cast<size_t>(t)])
      vertex_tris[static_cast<size_t>(vv)].push_back(t);

  std::vector<int> uf(static_cast<size_t>(nv), -1); // union-find, -1 = unused
  std::function<int(int)> find = [&](int x) {
    while (uf[static_cast<size_t>(x)] != x) {
      uf[static_cast<size_t>(x)] = uf[static_cast<size_t>(uf[static_cast<size_t>(x)])];
      x = uf[static_cast<size_t>(x)];
    }
    return x;
  };

  for (const auto& fe : fine.fracture_edges) {
    if (!tri_edges.count({std::min(fe.v0, fe.v1), std::max(fe.v0, fe.v1)}))
      continue;
    const Real len = (fine.vertices[fe.v1] - fine.vertices[fe.v0]).norm();
    const Real wk = params.k_f / len;
    a_dense(fe.v0, fe.v0) += wk;
    a_dense(fe.v1, fe.v1) += wk;
    a_dense(fe.v0, fe.v1) -= wk;
    a_dense(fe.v1, fe.v0) -= wk;

    std::set<int> corners;
    for (int vv : {fe.v0, fe.v1})
      for (int t : vertex_tris[static_cast<size_t>(vv)])
        for (int c : coarse.elements[static_cast<size_t>(
                 fine.coarse_element_of[static_cast<size_t>(t)])])
          corners.insert(c);
    Real slopes = 0;
    for (int c : corners) {
      const Vector& chi = pou.chi[static_cast<size_t>(c)];
      const Real slope = (chi[fe.v1] - chi[fe.v0]) / len;
      slopes += slope * slope;
    }
    const Real ws = params.k_f * slopes;
    s_dense(fe.v0, fe.v0) += ws * len / 3;
    s_dense(fe.v1, fe.v1) += ws * len / 3;
    s_dense(fe.v0, fe.v1) += ws * len / 6;
    s_dense(fe.v1, fe.v0) += ws * len / 6;

    for (int vv : {fe.v0, fe.v1})
      if (uf[static_cast<size_t>(vv)] < 0) uf[static_cast<size_t>(vv)] = vv;
    const int ra = find(fe.v0), rb = find(fe.v1);
    if (ra != rb) uf[static_cast<size_t>(ra)] = rb;
  }

  std::set<int> roots;
  for (int vv = 0; vv < nv; ++vv)
    if (uf[static_cast<size_t>(vv)] >= 0) roots.insert(find(vv));
  out.components = static_cast<int>(roots.size());

  // Restrict to the snapshot span and solve densely.
  Matrix z(nv, static_cast<Index>(snaps.size()));
  for (size_t s = 0; s < snaps.size(); ++s) z.col(static_cast<Index>(s)) = snaps[s];
  const Matrix a_snap = z.transpose() * a_dense * z;
  const Matrix s_snap = z.transpose() * s_dense * z;
  Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> ges(a_snap, s_snap);
  if (ges.info() != Eigen::Success)
    throw SolverError("dense patch eigensolve failed");
  out.oracle = ges.eigenvalues();
  return out;
}

int count_below(const Vector& ev, Real threshold) {
  int n = 0;
  for (Index i = 0; i < ev.size(); ++i)
    if (ev[i] < threshold) ++n;
  return n;
}

Verdict check_channel_spectrum() {
  Verdict v;

  FractureNetwork two;
  two.segments.push_back({{0.0, 0.3125}, {1.0, 0.3125}});
  two.segments.push_back({{0.0, 0.6875}, {1.0, 0.6875}});
  const PatchSpectrum spec = patch_spectrum(two);

  // Oracle agreement first: the count claim must not rest on one solver.
  // Relative for eigenvalues of visible size, absolute at the spectrum scale
  // for the numerically-zero ones (a backward-stable solver statement).
  Real worst = 0;
  const Real scale = std::max<Real>(1, spec.oracle[3]);
  const Index m = std::min<Index>(8, std::min(spec.lib.size(), spec.oracle.size()));
  for (Index i = 0; i < m; ++i)
    worst = std::max(worst, std::abs(spec.lib[i] - spec.oracle[i]) /
                                std::max(std::abs(spec.oracle[i]), scale));
  const bool oracle_ok = worst <= 1e-8;

  const Real threshold = 1e-2 * spec.lib[3];
  const int n_small = count_below(spec.lib, threshold);
  const int n_small_oracle = count_below(spec.oracle, 1e-2 * spec.oracle[3]);

  // Corroboration: with a third connected channel the same predicate counts
  // three, i.e. the small eigenvalues track the connected channels.
  FractureNetwork three = two;
  three.segments.push_back({{0.25, 0.5}, {0.75, 0.5}});
  const PatchSpectrum spec3 = patch_spectrum(three);
  const int n_small3 = count_below(spec3.lib, 1e-2 * spec3.lib[3]);

  v.pass = oracle_ok && n_small == 3 && n_small_oracle == 3;
  v.detail = "measured " + std::to_string(n_small) +
             " eigenvalues below 1e-2 x (4th smallest), expected 3";
  if (!oracle_ok) {
    v.notes.push_back("dense oracle disagrees with the library spectrum, max "
                      "relative deviation " + fmt(worst));
    return v;
  }
  if (!v.pass) {
    std::string evs = "leading eigenvalues:";
    for (Index i = 0; i < std::min<Index>(4, spec.lib.size()); ++i)
      evs += " " + fmt(spec.lib[i]);
    v.notes.push_back(evs + "  (threshold " + fmt(threshold) + ")");
    v.notes.push_back("independent dense assembly + dense generalized "
                      "eigensolver agrees to " + fmt(worst) +
                      " and counts " + std::to_string(n_small_oracle) +
                      " as well");
    v.notes.push_back(
        "the patch carries " + std::to_string(spec.components) +
        " connected high-conductivity channels and shows one near-zero "
        "eigenvalue per channel; adding a third channel yields " +
        std::to_string(n_small3) + " small eigenvalues (components: " +
        std::to_string(spec3.components) + ")");
    v.notes.push_back("a count of 3 is therefore not reachable for this "
                      "two-channel geometry; see README.md, 'Known limitations'");
  }
  return v;
}

// ---------------------------------------------------------------------------
// Check 10: the full pipeline is deterministic: two runs of the same seeded
// configuration produce byte-identical output files.
// ---------------------------------------------------------------------------

Verdict check_determinism(Shared& sh) {
  Verdict v;
  namespace fs = std::filesystem;
  const fs::path base = fs::temp_directory_path();
  const fs::path dir_a = base / "msinv_acceptance_a";
  const fs::path dir_b = base / "msinv_acceptance_b";
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);

  std::ostringstream sink;
  ExperimentConfig cfg_a = *sh.cfg1;
  cfg_a.output_dir = dir_a.string();
  run_case(cfg_a, sink);
  ExperimentConfig cfg_b = *sh.cfg1;
  cfg_b.output_dir = dir_b.string();
  run_case(cfg_b, sink);

  std::vector<std::string> same, differ;
  for (const char* name :
       {"history.csv", "observations.csv", "errors.csv", "eigenvalues.csv"}) {
    const std::string a = slurp((dir_a / name).string());
    const std::string b = slurp((dir_b / name).string());
    (a == b ? same : differ).push_back(name);
  }
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);

  v.pass = differ.empty();
  v.detail = std::to_string(same.size()) + "/4 output files byte-identical";
  for (const auto& name : differ) v.notes.push_back(name + " differs between runs");
  return v;
}

} // namespace

int main(int argc, char** argv) {
  std::cout << std::setprecision(6);
  Shared sh;
  sh.cases = argc > 1 ? argv[1] : "cases";

  try {
    sh.cfg1 = read_config(case_path(sh, "case1_desk.cfg"));
    sh.cfg2 = read_config(case_path(sh, "case2_desk.cfg"));
    sh.cfg3 = read_config(case_path(sh, "case3_desk.cfg"));
  } catch (const std::exception& e) {
    std::cout << "acceptance: cannot load case configurations from '"
              << sh.cases << "': " << e.what() << "\n";
    return 2;
  }

  run_check(1, "first bases sum to one at interior fine vertices",
            [&] { return check_partition_of_unity(sh); });
  run_check(2, "element blocks match a dense brute-force projection",
            [&] { return check_element_blocks(); });
  run_check(3, "consistent gradient matches central finite differences",
            [&] { return check_gradient_fd(); });
  run_check(4, "case 1 desk objective never increases over the full budget",
            [&] { return check_descent(sh); });
  run_check(5, "final cell-average errors beat the prior at every time step",
            [&] { return check_error_reduction(sh); });
  run_check(6, "more observation noise never improves the final fit",
            [&] { return check_noise_monotonicity(sh); });
  run_check(7, "masked update freezes out-of-mask blocks and stays near full",
            [&] { return check_masked_update(sh); });
  run_check(8, "implicit Euler error halves when the step count doubles",
            [&] { return check_time_stepper_order(); });
  run_check(9, "two-channel neighborhood shows three near-zero eigenvalues",
            [&] { return check_channel_spectrum(); });
  run_check(10, "seeded reruns produce byte-identical output files",
            [&] { return check_determinism(sh); });

  if (g_failures == 0) {
    std::cout << "acceptance: all 10 criteria passed\n";
  } else {
    std::cout << "acceptance: " << (10 - g_failures) << "/10 criteria passed, "
              << g_failures << " failed\n";
  }
  return g_failures == 0 ? 0 : 1;
}
