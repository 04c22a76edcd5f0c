#include "msinv/config.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "msinv/errors.hpp"

namespace msinv {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> tokens(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string t;
  while (in >> t) out.push_back(t);
  return out;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
  throw ConfigError("key '" + key + "': cannot parse value '" + value + "'");
}

Real parse_real(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  Real x = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), x);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) bad_value(key, value);
  return x;
}

long long parse_int(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  long long x = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), x);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) bad_value(key, value);
  return x;
}

unsigned long long parse_uint(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  unsigned long long x = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), x);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) bad_value(key, value);
  return x;
}

bool parse_bool(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(key, value);
}

CellSpec parse_cell_spec(const std::string& key, const std::string& value) {
  const auto tok = tokens(value);
  if (tok.empty()) bad_value(key, value);
  CellSpec spec;
  if (tok[0] == "all") {
    if (tok.size() != 1) bad_value(key, value);
    spec.kind = CellSpec::Kind::all;
  } else if (tok[0] == "rect") {
    if (tok.size() != 5) bad_value(key, value);
    spec.kind = CellSpec::Kind::rect;
    spec.x0 = parse_real(key, tok[1]);
    spec.y0 = parse_real(key, tok[2]);
    spec.x1 = parse_real(key, tok[3]);
    spec.y1 = parse_real(key, tok[4]);
    if (spec.x1 < spec.x0 || spec.y1 < spec.y0)
      throw ConfigError("key '" + key + "': empty rectangle");
  } else if (tok[0] == "cells") {
    if (tok.size() < 2) bad_value(key, value);
    spec.kind = CellSpec::Kind::cells;
    for (size_t i = 1; i < tok.size(); ++i)
      spec.ids.push_back(static_cast<int>(parse_int(key, tok[i])));
  } else {
    bad_value(key, value);
  }
  return spec;
}

void set_key(ExperimentConfig& c, const std::string& key,
             const std::string& value) {
  if (key == "coarse_n") c.coarse_n = static_cast<int>(parse_int(key, value));
  else if (key == "refine_r") c.refine_r = static_cast<int>(parse_int(key, value));
  else if (key == "true_fractures") c.true_fractures = trim(value);
  else if (key == "prior_fractures") c.prior_fractures = trim(value);
  else if (key == "k_m") c.params.k_m = parse_real(key, value);
  else if (key == "k_f") c.params.k_f = parse_real(key, value);
  else if (key == "c_m") c.params.c_m = parse_real(key, value);
  else if (key == "c_f") c.c_f = parse_real(key, value);
  else if (key == "f") c.params.f = parse_real(key, value);
  else if (key == "p0") c.params.p0 = parse_real(key, value);
  else if (key == "T") c.params.T = parse_real(key, value);
  else if (key == "n_t") c.params.n_t = static_cast<int>(parse_int(key, value));
  else if (key == "n_bases") c.n_bases = static_cast<int>(parse_int(key, value));
  else if (key == "sigma_M") c.inversion.sigma_M = parse_real(key, value);
  else if (key == "sigma_A") c.inversion.sigma_A = parse_real(key, value);
  else if (key == "sigma_F") c.inversion.sigma_F = parse_real(key, value);
  else if (key == "epsilon") c.inversion.epsilon = parse_real(key, value);
  else if (key == "n_iter") c.inversion.n_iter = static_cast<int>(parse_int(key, value));
  else if (key == "j_rel_tol") c.inversion.j_rel_tol = parse_real(key, value);
  else if (key == "gradient_mode") c.inversion.gradient_mode = parse_gradient_mode(trim(value));
  else if (key == "halve_on_reject") c.inversion.halve_on_reject = parse_bool(key, value);
  else if (key == "update_mask") c.update_spec = parse_cell_spec(key, value);
  else if (key == "observed_cells") c.observed_spec = parse_cell_spec(key, value);
  else if (key == "noise_delta") c.noise_delta = parse_real(key, value);
  else if (key == "seed") c.seed = parse_uint(key, value);
  else if (key == "output_dir") c.output_dir = trim(value);
  else throw ConfigError("unknown key '" + key + "'");
}

} // namespace

GradientMode parse_gradient_mode(const std::string& text) {
  if (text == "factor") return GradientMode::factor;
  if (text == "consistent") return GradientMode::consistent;
  throw ConfigError("gradient_mode must be 'factor' or 'consistent', got '" +
                    text + "'");
}

const char* gradient_mode_name(GradientMode mode) {
  return mode == GradientMode::factor ? "factor" : "consistent";
}

std::vector<int> CellSpec::resolve(const CoarseMesh& coarse) const {
  const int n_elements = static_cast<int>(coarse.elements.size());
  std::vector<int> out;
  switch (kind) {
    case Kind::all:
      out.resize(static_cast<size_t>(n_elements));
      for (int k = 0; k < n_elements; ++k) out[static_cast<size_t>(k)] = k;
      break;
    case Kind::rect:
      for (int k = 0; k < n_elements; ++k) {
        const auto& el = coarse.elements[static_cast<size_t>(k)];
        const Vector2 c = (coarse.vertices[static_cast<size_t>(el[0])] +
                           coarse.vertices[static_cast<size_t>(el[1])] +
                           coarse.vertices[static_cast<size_t>(el[2])]) /
                          3.0;
        if (c.x() >= x0 && c.x() <= x1 && c.y() >= y0 && c.y() <= y1)
          out.push_back(k);
      }
      break;
    case Kind::cells:
      out = ids;
      std::sort(out.begin(), out.end());
      out.erase(std::unique(out.begin(), out.end()), out.end());
      for (int k : out)
        if (k < 0 || k >= n_elements)
          throw ConfigError("cell id " + std::to_string(k) +
                            " out of range for " + std::to_string(n_elements) +
                            " coarse elements");
      break;
  }
  return out;
}

void ExperimentConfig::apply_override(const std::string& key,
                                      const std::string& value) {
  set_key(*this, key, value);
}

ExperimentConfig read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  const std::filesystem::path dir = std::filesystem::path(path).parent_path();

  ExperimentConfig config;
  std::set<std::string> seen;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError(path + ":" + std::to_string(line_no) +
                          ": malformed section header");
      continue; // headers are organizational only
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(line_no) +
                        ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError(path + ":" + std::to_string(line_no) + ": empty key");
    if (!seen.insert(key).second)
      throw ConfigError(path + ":" + std::to_string(line_no) +
                        ": duplicate key '" + key + "'");
    try {
      set_key(config, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": " +
                        e.what());
    }
  }

  auto resolve = [&dir](std::string& p) {
    if (p.empty()) return;
    std::filesystem::path fp(p);
    if (fp.is_relative()) p = (dir / fp).string();
  };
  resolve(config.true_fractures);
  resolve(config.prior_fractures);
  return config;
}

} // namespace msinv
