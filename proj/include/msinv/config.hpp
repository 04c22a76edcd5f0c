#pragma once

#include <string>
#include <vector>

#include "msinv/assembly.hpp"
#include "msinv/geometry.hpp"
#include "msinv/inversion.hpp"

namespace msinv {

// Selection of coarse elements: everything, a closed axis-aligned rectangle
// tested against element centroids, or an explicit id list.
struct CellSpec {
  enum class Kind { all, rect, cells };
  Kind kind = Kind::all;
  Real x0 = 0, y0 = 0, x1 = 1, y1 = 1; // rect only
  std::vector<int> ids;                // cells only

  std::vector<int> resolve(const CoarseMesh& coarse) const; // sorted, unique
};

// One experiment: meshes, physics, space size, inversion knobs, noise and
// output location. Parsed from flat key=value text with [section] headers.
struct ExperimentConfig {
  int coarse_n = 10;
  int refine_r = 8;
  std::string true_fractures;  // empty means no fractures
  std::string prior_fractures; // empty means no fractures

  AssemblyParams params;
  Real c_f = 0; // fracture storage coefficient; zero-width edges carry no
                // volume, so the value is recorded but inert

  int n_bases = 2;

  InversionConfig inversion; // update_mask/observed_cells filled at run time
  CellSpec observed_spec;
  CellSpec update_spec;

  Real noise_delta = 0;
  unsigned long long seed = 0;
  std::string output_dir = "out";

  // Sets one key to a new value using the same syntax as the config file.
  // Throws ConfigError for unknown keys or unparsable values.
  void apply_override(const std::string& key, const std::string& value);
};

// Reads and validates a config file. Relative fracture paths are resolved
// against the directory containing the file. Throws ConfigError with the
// offending line number for unknown keys, duplicates, and bad values.
ExperimentConfig read_config(const std::string& path);

GradientMode parse_gradient_mode(const std::string& text); // ConfigError
const char* gradient_mode_name(GradientMode mode);

} // namespace msinv
