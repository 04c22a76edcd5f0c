#include "msinv/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "msinv/errors.hpp"

namespace msinv {

namespace {

void check_endpoint(const Vector2& p, const std::string& where) {
  if (!(p.x() >= 0.0 && p.x() <= 1.0 && p.y() >= 0.0 && p.y() <= 1.0))
    throw InvalidArgument(where + ": fracture endpoint (" +
                          std::to_string(p.x()) + ", " + std::to_string(p.y()) +
                          ") outside the closed unit square");
}

void check_segment(const FractureNetwork::Segment& s, const std::string& where) {
  check_endpoint(s.a, where);
  check_endpoint(s.b, where);
  if ((s.a - s.b).squaredNorm() == 0.0)
    throw InvalidArgument(where + ": zero-length fracture segment");
}

// Nearest lattice index for coordinate v on an nx-cell grid, ties toward the
// smaller index.
int snap_index(Real v, int nx) {
  int i = static_cast<int>(std::ceil(v * nx - 0.5));
  return std::clamp(i, 0, nx);
}

} // namespace

FractureNetwork read_fracture_file(const std::string& path) {
  std::ifstream in(path);
  if (!in)
    throw InvalidArgument("cannot open fracture file: " + path);
  FractureNetwork net;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos)
      line.erase(hash);
    std::istringstream is(line);
    Real x1, y1, x2, y2;
    if (!(is >> x1)) continue; // blank or comment-only line
    if (!(is >> y1 >> x2 >> y2))
      throw InvalidArgument(path + ":" + std::to_string(lineno) +
                            ": expected four coordinates");
    std::string rest;
    if (is >> rest)
      throw InvalidArgument(path + ":" + std::to_string(lineno) +
                            ": trailing content '" + rest + "'");
    FractureNetwork::Segment s{Vector2(x1, y1), Vector2(x2, y2)};
    check_segment(s, path + ":" + std::to_string(lineno));
    net.segments.push_back(s);
  }
  return net;
}

CoarseMesh build_coarse_mesh(int n) {
  if (n < 1)
    throw InvalidArgument("build_coarse_mesh: n must be >= 1, got " +
                          std::to_string(n));
  CoarseMesh m;
  m.n = n;
  m.H = Real(1) / n;
  const int w = n + 1;
  m.vertices.reserve(static_cast<size_t>(w) * w);
  for (int iy = 0; iy < w; ++iy)
    for (int ix = 0; ix < w; ++ix)
      m.vertices.emplace_back(Real(ix) / n, Real(iy) / n);
  m.elements.reserve(2 * static_cast<size_t>(n) * n);
  for (int sy = 0; sy < n; ++sy)
    for (int sx = 0; sx < n; ++sx) {
      const int v00 = m.vertex_id(sx, sy);
      const int v10 = m.vertex_id(sx + 1, sy);
      const int v01 = m.vertex_id(sx, sy + 1);
      const int v11 = m.vertex_id(sx + 1, sy + 1);
      m.elements.push_back({v00, v10, v11});
      m.elements.push_back({v00, v11, v01});
    }
  m.vertex_patches.resize(m.vertices.size());
  for (int iy = 0; iy < w; ++iy)
    for (int ix = 0; ix < w; ++ix) {
      auto& patch = m.vertex_patches[m.vertex_id(ix, iy)];
      for (int sy = iy - 1; sy <= iy; ++sy)
        for (int sx = ix - 1; sx <= ix; ++sx) {
          if (sx < 0 || sy < 0 || sx >= n || sy >= n) continue;
          const int base = 2 * (sy * n + sx);
          patch.push_back(base);
          patch.push_back(base + 1);
        }
    }
  return m;
}

std::vector<int> FineMesh::dirichlet_vertices() const {
  std::vector<int> out;
  for (int v = 0; v < vertex_count(); ++v)
    if (boundary_tags[v] == BoundaryTag::dirichlet) out.push_back(v);
  return out;
}

namespace detail {

std::vector<std::pair<int, int>> snap_segment(int nx, const Vector2& a,
                                              const Vector2& b) {
  const int w = nx + 1;
  int ax = snap_index(a.x(), nx), ay = snap_index(a.y(), nx);
  int bx = snap_index(b.x(), nx), by = snap_index(b.y(), nx);
  if (bx < ax || (bx == ax && by < ay)) {
    std::swap(ax, bx);
    std::swap(ay, by);
  }
  if (ax == bx && ay == by) return {};

  const long long dx = bx - ax, dy = by - ay;
  // Signed area of the parallelogram spanned by (dx,dy) and (x-ax, y-ay);
  // zero exactly on the line through the snapped endpoints.
  auto cross = [&](long long x, long long y) {
    return dx * (y - ay) - dy * (x - ax);
  };

  std::vector<std::pair<int, int>> chain;
  int x = ax, y = ay;
  const long long limit = 4LL * nx + 4;
  for (long long it = 0; it < limit && !(x == bx && y == by); ++it) {
    // Candidate steps along fine edges: E, N and the NE diagonal for rising
    // segments, E and S for falling ones. SE is not a mesh edge.
    const std::array<std::pair<int, int>, 3> steps =
        dy >= 0 ? std::array<std::pair<int, int>, 3>{{{1, 0}, {0, 1}, {1, 1}}}
                : std::array<std::pair<int, int>, 3>{{{1, 0}, {0, -1}, {0, -1}}};
    const int n_steps = dy >= 0 ? 3 : 2;
    int best_x = -1, best_y = -1;
    long long best_err = 0;
    for (int s = 0; s < n_steps; ++s) {
      const int cx = x + steps[s].first, cy = y + steps[s].second;
      const bool feasible = cx <= bx && (dy >= 0 ? cy <= by : cy >= by);
      if (!feasible) continue;
      const long long err = std::llabs(cross(cx, cy));
      const bool better =
          best_x < 0 || err < best_err ||
          (err == best_err && cy * w + cx < best_y * w + best_x);
      if (better) {
        best_x = cx;
        best_y = cy;
        best_err = err;
      }
    }
    const int id0 = y * w + x, id1 = best_y * w + best_x;
    chain.emplace_back(std::min(id0, id1), std::max(id0, id1));
    x = best_x;
    y = best_y;
  }
  if (!(x == bx && y == by))
    throw Error("snap_segment: walk failed to terminate"); // unreachable
  return chain;
}

} // namespace detail

FineMesh build_fine_mesh(const CoarseMesh& coarse, int r,
                         const FractureNetwork& fractures) {
  if (r < 1)
    throw InvalidArgument("build_fine_mesh: r must be >= 1, got " +
                          std::to_string(r));
  FineMesh m;
  m.r = r;
  m.nx = coarse.n * r;
  m.h = Real(1) / m.nx;
  const int nx = m.nx, w = nx + 1;

  m.vertices.reserve(static_cast<size_t>(w) * w);
  m.boundary_tags.reserve(static_cast<size_t>(w) * w);
  for (int iy = 0; iy < w; ++iy)
    for (int ix = 0; ix < w; ++ix) {
      m.vertices.emplace_back(Real(ix) / nx, Real(iy) / nx);
      BoundaryTag tag = BoundaryTag::interior;
      if (ix == 0)
        tag = BoundaryTag::dirichlet;
      else if (ix == nx || iy == 0 || iy == nx)
        tag = BoundaryTag::neumann;
      m.boundary_tags.push_back(tag);
    }

  m.elements.reserve(2 * static_cast<size_t>(nx) * nx);
  m.coarse_element_of.reserve(m.elements.capacity());
  m.coarse_to_fine.resize(coarse.elements.size());
  for (int fy = 0; fy < nx; ++fy)
    for (int fx = 0; fx < nx; ++fx) {
      const int v00 = m.vertex_id(fx, fy);
      const int v10 = m.vertex_id(fx + 1, fy);
      const int v01 = m.vertex_id(fx, fy + 1);
      const int v11 = m.vertex_id(fx + 1, fy + 1);
      // Fine squares strictly below the coarse diagonal belong to the lower
      // coarse triangle, strictly above to the upper; the straddling square
      // (lx == ly) splits the same way the coarse square does.
      const int cx = fx / r, cy = fy / r, lx = fx % r, ly = fy % r;
      const int cbase = 2 * (cy * coarse.n + cx);
      for (int up = 0; up < 2; ++up) {
        const int t = static_cast<int>(m.elements.size());
        m.elements.push_back(up == 0 ? std::array<int, 3>{v00, v10, v11}
                                     : std::array<int, 3>{v00, v11, v01});
        const int owner = lx > ly ? cbase : lx < ly ? cbase + 1 : cbase + up;
        m.coarse_element_of.push_back(owner);
        m.coarse_to_fine[owner].push_back(t);
      }
    }

  for (int s = 0; s < fractures.size(); ++s) {
    const auto& seg = fractures.segments[s];
    check_segment(seg, "build_fine_mesh: segment " + std::to_string(s));
    auto chain = detail::snap_segment(nx, seg.a, seg.b);
    if (chain.empty())
      throw DegenerateFracture(
          "build_fine_mesh: segment " + std::to_string(s) +
          " collapses to a single vertex at this resolution");
    for (auto [v0, v1] : chain) m.fracture_edges.push_back({v0, v1, s});
  }
  return m;
}

std::vector<int> neighborhood_elements(const FineMesh& fine,
                                       const CoarseMesh& coarse, int i) {
  if (i < 0 || i >= coarse.vertex_count())
    throw InvalidArgument("neighborhood_elements: coarse vertex " +
                          std::to_string(i) + " out of range");
  std::vector<int> out;
  for (int K : coarse.vertex_patches[i])
    out.insert(out.end(), fine.coarse_to_fine[K].begin(),
               fine.coarse_to_fine[K].end());
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<int> neighborhood_boundary(const FineMesh& fine,
                                       const CoarseMesh& coarse, int i) {
  const auto tris = neighborhood_elements(fine, coarse, i);
  // Edges seen by exactly one patch triangle form the patch boundary.
  std::map<std::pair<int, int>, int> edge_count;
  for (int t : tris) {
    const auto& e = fine.elements[t];
    for (int k = 0; k < 3; ++k) {
      const int u = e[k], v = e[(k + 1) % 3];
      ++edge_count[{std::min(u, v), std::max(u, v)}];
    }
  }
  std::vector<int> verts;
  for (const auto& [edge, count] : edge_count) {
    if (count != 1) continue;
    verts.push_back(edge.first);
    verts.push_back(edge.second);
  }
  std::sort(verts.begin(), verts.end());
  verts.erase(std::unique(verts.begin(), verts.end()), verts.end());
  const int w = fine.nx + 1;
  std::sort(verts.begin(), verts.end(), [w](int a, int b) {
    return std::pair(a % w, a / w) < std::pair(b % w, b / w);
  });
  return verts;
}

} // namespace msinv
