#include "msinv/experiment.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <ostream>

#include "msinv/detail/io.hpp"
#include "msinv/errors.hpp"
#include "msinv/forward.hpp"
#include "msinv/gmsfem.hpp"

namespace msinv {

namespace {

FractureNetwork load_network(const std::string& path) {
  if (path.empty()) return {};
  return read_fracture_file(path);
}

std::string spec_text(const CellSpec& spec) {
  switch (spec.kind) {
    case CellSpec::Kind::all:
      return "all";
    case CellSpec::Kind::rect: {
      std::string s = "rect";
      for (Real v : {spec.x0, spec.y0, spec.x1, spec.y1})
        s += " " + detail::format_real(v);
      return s;
    }
    case CellSpec::Kind::cells: {
      std::string s = "cells";
      for (int id : spec.ids) s += " " + std::to_string(id);
      return s;
    }
  }
  return {};
}

void echo_config(const ExperimentConfig& c, std::ostream& out) {
  out << "coarse_n = " << c.coarse_n << "\n"
      << "refine_r = " << c.refine_r << "\n"
      << "true_fractures = " << c.true_fractures << "\n"
      << "prior_fractures = " << c.prior_fractures << "\n"
      << "k_m = " << detail::format_real(c.params.k_m) << "\n"
      << "k_f = " << detail::format_real(c.params.k_f) << "\n"
      << "c_m = " << detail::format_real(c.params.c_m) << "\n"
      << "c_f = " << detail::format_real(c.c_f) << "\n"
      << "f = " << detail::format_real(c.params.f) << "\n"
      << "p0 = " << detail::format_real(c.params.p0) << "\n"
      << "T = " << detail::format_real(c.params.T) << "\n"
      << "n_t = " << c.params.n_t << "\n"
      << "n_bases = " << c.n_bases << "\n"
      << "sigma_M = " << detail::format_real(c.inversion.sigma_M) << "\n"
      << "sigma_A = " << detail::format_real(c.inversion.sigma_A) << "\n"
      << "sigma_F = " << detail::format_real(c.inversion.sigma_F) << "\n"
      << "epsilon = " << detail::format_real(c.inversion.epsilon) << "\n"
      << "n_iter = " << c.inversion.n_iter << "\n"
      << "j_rel_tol = " << detail::format_real(c.inversion.j_rel_tol) << "\n"
      << "gradient_mode = " << gradient_mode_name(c.inversion.gradient_mode)
      << "\n"
      << "halve_on_reject = "
      << (c.inversion.halve_on_reject ? "true" : "false") << "\n"
      << "update_mask = " << spec_text(c.update_spec) << "\n"
      << "observed_cells = " << spec_text(c.observed_spec) << "\n"
      << "noise_delta = " << detail::format_real(c.noise_delta) << "\n"
      << "seed = " << c.seed << "\n"
      << "output_dir = " << c.output_dir << "\n";
}

// Snapped position of one endpoint: same rounding as the chain walk (ties
// toward the smaller index).
Vector2 snapped_endpoint(int nx, const Vector2& p) {
  auto idx = [nx](Real v) {
    const auto i = static_cast<long long>(std::ceil(v * nx - 0.5));
    return static_cast<int>(std::clamp<long long>(i, 0, nx));
  };
  return {static_cast<Real>(idx(p.x())) / nx, static_cast<Real>(idx(p.y())) / nx};
}

void describe_network(const std::string& label, const std::string& path,
                      int nx, std::ostream& out) {
  out << label << ": ";
  if (path.empty()) {
    out << "(none)\n";
    return;
  }
  const FractureNetwork net = load_network(path);
  out << path << ", " << net.size() << " segment(s)\n";
  for (int s = 0; s < net.size(); ++s) {
    const auto& seg = net.segments[static_cast<size_t>(s)];
    const auto chain = detail::snap_segment(nx, seg.a, seg.b);
    const Vector2 sa = snapped_endpoint(nx, seg.a);
    const Vector2 sb = snapped_endpoint(nx, seg.b);
    const Real res = std::max((sa - seg.a).norm(), (sb - seg.b).norm());
    out << "  segment " << s << ": (" << detail::format_real(seg.a.x()) << ","
        << detail::format_real(seg.a.y()) << ")-("
        << detail::format_real(seg.b.x()) << ","
        << detail::format_real(seg.b.y()) << ")  " << chain.size()
        << " fine edge(s), endpoint snap residual "
        << detail::format_real(res) << "\n";
  }
}

} // namespace

RunSummary run_case(const ExperimentConfig& config, std::ostream& log) {
  const auto t_start = std::chrono::steady_clock::now();
  config.params.validate();

  const CoarseMesh coarse = build_coarse_mesh(config.coarse_n);
  const std::vector<int> observed = config.observed_spec.resolve(coarse);
  const std::vector<int> mask = config.update_spec.resolve(coarse);
  if (observed.empty()) throw ConfigError("observed_cells resolves to no cells");
  if (mask.empty()) throw ConfigError("update_mask resolves to no cells");

  log << "[truth] building fine mesh and reference solution\n";
  const FractureNetwork truth_net = load_network(config.true_fractures);
  const FineMesh fine_truth = build_fine_mesh(coarse, config.refine_r, truth_net);
  const Trajectory truth = fine_reference_solve(fine_truth, config.params);

  log << "[data] sampling observations on " << observed.size() << " cell(s)\n";
  const ObservationSeries data = make_observations(
      fine_truth, truth.states, observed, config.noise_delta, config.seed);

  log << "[prior] building multiscale space (" << config.n_bases
      << " bases per vertex)\n";
  const FractureNetwork prior_net = load_network(config.prior_fractures);
  const FineMesh fine_prior = build_fine_mesh(coarse, config.refine_r, prior_net);
  const MultiscaleSpace space =
      build_space(fine_prior, coarse, config.params, config.n_bases);
  const CoarseSystem prior =
      assemble_coarse(space, fine_prior, coarse, config.params);

  InversionConfig inv = config.inversion;
  inv.observed_cells = observed;
  inv.update_mask = mask;

  log << "[inversion] " << gradient_mode_name(inv.gradient_mode)
      << " gradient, up to " << inv.n_iter << " iteration(s)\n";
  const InversionResult result =
      run_inversion(prior, space, fine_prior, config.params, inv, data);

  RunSummary summary;
  summary.initial_terms = result.history.front();
  summary.final_terms = result.history.back();
  summary.iterations = result.state.iterate;
  summary.any_rejection = result.state.any_rejection;
  summary.report =
      error_report(result.state, prior, truth.states, fine_truth, config.params);

  const std::filesystem::path dir(config.output_dir);
  std::filesystem::create_directories(dir);
  write_history_csv(result.history, (dir / "history.csv").string());
  write_error_csv(summary.report, (dir / "errors.csv").string());
  write_observation_csv(data, (dir / "observations.csv").string());
  write_eigenvalue_csv(space, (dir / "eigenvalues.csv").string());

  summary.wall_seconds =
      std::chrono::duration<Real>(std::chrono::steady_clock::now() - t_start)
          .count();

  auto rep = detail::open_output((dir / "report.txt").string());
  rep << "# resolved configuration\n";
  echo_config(config, rep);
  rep << "\n# problem sizes\n"
      << "coarse_elements = " << coarse.element_count() << "\n"
      << "coarse_dofs = " << space.dof_count() << "\n"
      << "fine_vertices = " << fine_truth.vertex_count() << "\n"
      << "fine_elements = " << fine_truth.element_count() << "\n"
      << "truth_fracture_edges = " << fine_truth.fracture_edges.size() << "\n"
      << "prior_fracture_edges = " << fine_prior.fracture_edges.size() << "\n"
      << "observed_cell_count = " << observed.size() << "\n"
      << "update_mask_count = " << mask.size() << "\n"
      << "\n# result\n"
      << "gradient_mode = " << gradient_mode_name(inv.gradient_mode) << "\n"
      << "iterations = " << summary.iterations << "\n"
      << "any_step_rejected = " << (summary.any_rejection ? "yes" : "no")
      << "\n"
      << "J_initial = " << detail::format_real(summary.initial_terms.j) << "\n"
      << "J_final = " << detail::format_real(summary.final_terms.j) << "\n"
      << "term_M = " << detail::format_real(summary.final_terms.term_m) << "\n"
      << "term_A = " << detail::format_real(summary.final_terms.term_a) << "\n"
      << "term_F = " << detail::format_real(summary.final_terms.term_f) << "\n"
      << "aggregate_error_initial = "
      << detail::format_real(summary.report.aggregate_initial) << "\n"
      << "aggregate_error_final = "
      << detail::format_real(summary.report.aggregate_final) << "\n"
      << "wall_seconds = " << detail::format_real(summary.wall_seconds) << "\n";

  log << "[done] J " << detail::format_real(summary.initial_terms.j) << " -> "
      << detail::format_real(summary.final_terms.j) << " in "
      << summary.iterations << " iteration(s), "
      << detail::format_real(summary.wall_seconds) << " s; artifacts in "
      << dir.string() << "\n";
  return summary;
}

void validate_config(const ExperimentConfig& config, std::ostream& out) {
  config.params.validate();
  const CoarseMesh coarse = build_coarse_mesh(config.coarse_n);
  if (config.refine_r < 1)
    throw ConfigError("refine_r must be >= 1, got " +
                      std::to_string(config.refine_r));
  const int nx = config.coarse_n * config.refine_r;

  out << "# configuration\n";
  echo_config(config, out);

  out << "\n# predicted sizes\n"
      << "coarse_elements = " << coarse.element_count() << "\n"
      << "coarse_dofs = " << coarse.vertex_count() * config.n_bases << "\n"
      << "fine_vertices = " << (nx + 1) * (nx + 1) << "\n"
      << "fine_elements = " << 2 * nx * nx << "\n"
      << "time_steps = " << config.params.n_t << "\n";

  const std::vector<int> observed = config.observed_spec.resolve(coarse);
  const std::vector<int> mask = config.update_spec.resolve(coarse);
  out << "\n# resolved cell sets\n"
      << "observed_cells: " << observed.size() << " cell(s)\n"
      << "update_mask: " << mask.size() << " cell(s)\n";
  if (observed.empty()) out << "warning: observed_cells is empty\n";
  if (mask.empty()) out << "warning: update_mask is empty\n";

  out << "\n# fractures\n";
  describe_network("true_fractures", config.true_fractures, nx, out);
  describe_network("prior_fractures", config.prior_fractures, nx, out);
}

void sweep(const ExperimentConfig& base, const std::string& key,
           const std::vector<std::string>& values, std::ostream& log) {
  if (values.empty()) throw ConfigError("sweep: no values given");
  const std::filesystem::path root(base.output_dir);
  for (const std::string& value : values) {
    ExperimentConfig c = base;
    c.apply_override(key, value);
    std::string tag = key + "_" + value;
    for (char& ch : tag)
      if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '.' &&
          ch != '-' && ch != '_')
        ch = '-';
    c.output_dir = (root / tag).string();
    log << "== " << key << " = " << value << " ==\n";
    run_case(c, log);
  }
}

} // namespace msinv
