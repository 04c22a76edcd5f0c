#pragma once

#include <charconv>
#include <fstream>
#include <string>

#include "msinv/errors.hpp"
#include "msinv/types.hpp"

namespace msinv::detail {

// Shortest round-trip decimal form; output is platform-stable, which keeps
// repeated runs byte-identical.
inline std::string format_real(Real v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary); // fixed newlines everywhere
  if (!out) throw Error("cannot open output file: " + path);
  return out;
}

} // namespace msinv::detail
