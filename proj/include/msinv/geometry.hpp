#pragma once

#include <array>
#include <string>
#include <vector>

#include "msinv/types.hpp"

namespace msinv {

// Vertex classification on the unit square. Pressure is prescribed on the
// left edge (x = 0); every other boundary vertex is a no-flux vertex.
enum class BoundaryTag : unsigned char { interior, dirichlet, neumann };

// Zero-width line segments with a common tangential conductivity. Widths are
// not modelled: a fracture only contributes a 1-D term along fine edges.
struct FractureNetwork {
  struct Segment {
    Vector2 a;
    Vector2 b;
  };
  std::vector<Segment> segments;

  bool empty() const { return segments.empty(); }
  int size() const { return static_cast<int>(segments.size()); }
};

// Reads segments from a text file, one "x1 y1 x2 y2" per line. Blank lines
// and lines starting with '#' are skipped. Throws InvalidArgument on
// unreadable files, malformed lines, out-of-domain endpoints or zero-length
// segments.
FractureNetwork read_fracture_file(const std::string& path);

// Conforming triangulation of [0,1]^2 into n x n squares, each split along
// the bottom-left to top-right diagonal. Square (sx, sy) owns triangles
// 2*(sy*n+sx) (lower: v00,v10,v11) and 2*(sy*n+sx)+1 (upper: v00,v11,v01).
// Vertices are numbered row-major, (ix, iy) -> iy*(n+1)+ix.
struct CoarseMesh {
  int n = 0;  // cells per side
  Real H = 0; // cell edge length, 1/n
  std::vector<Vector2> vertices;
  std::vector<std::array<int, 3>> elements;
  // Per coarse vertex: all triangles of the incident squares, ascending.
  // This is the support patch used for snapshot and spectral computations;
  // it has 2, 4 or 8 triangles for corner, edge and interior vertices.
  std::vector<std::vector<int>> vertex_patches;

  int vertex_count() const { return static_cast<int>(vertices.size()); }
  int element_count() const { return static_cast<int>(elements.size()); }
  int vertex_id(int ix, int iy) const { return iy * (n + 1) + ix; }
};

// Fine edge carrying a fracture, with the index of the originating segment.
// Vertex ids satisfy v0 < v1; edges are listed chain by chain in walk order.
struct FractureEdge {
  int v0 = 0;
  int v1 = 0;
  int segment = 0;
};

// Uniform r-fold refinement of a CoarseMesh, same splitting convention, with
// fractures snapped onto fine edges. Every fine triangle lies inside exactly
// one coarse triangle.
struct FineMesh {
  int nx = 0; // fine cells per side, n*r
  int r = 1;
  Real h = 0; // fine edge length, 1/nx
  std::vector<Vector2> vertices;
  std::vector<std::array<int, 3>> elements;
  std::vector<BoundaryTag> boundary_tags; // per vertex
  std::vector<FractureEdge> fracture_edges;
  std::vector<int> coarse_element_of;         // per fine triangle
  std::vector<std::vector<int>> coarse_to_fine; // per coarse triangle, ascending

  int vertex_count() const { return static_cast<int>(vertices.size()); }
  int element_count() const { return static_cast<int>(elements.size()); }
  int vertex_id(int ix, int iy) const { return iy * (nx + 1) + ix; }
  std::vector<int> dirichlet_vertices() const;
};

// Throws InvalidArgument unless n >= 1.
CoarseMesh build_coarse_mesh(int n);

// Refines and snaps fractures. Endpoints are moved to the nearest fine
// lattice vertex (ties toward the smaller index) and joined by a monotone
// staircase of fine edges minimising the distance to the exact segment.
// Throws InvalidArgument for r < 1, endpoints outside the closed unit square
// or zero-length segments, and DegenerateFracture when both endpoints snap
// to the same vertex.
FineMesh build_fine_mesh(const CoarseMesh& coarse, int r,
                         const FractureNetwork& fractures = {});

// Fine vertices on the boundary of the support patch of coarse vertex i,
// sorted lexicographically by coordinate (x first, then y). Throws
// InvalidArgument for out-of-range i.
std::vector<int> neighborhood_boundary(const FineMesh& fine,
                                       const CoarseMesh& coarse, int i);

// All fine triangles of the support patch of coarse vertex i, ascending.
std::vector<int> neighborhood_elements(const FineMesh& fine,
                                       const CoarseMesh& coarse, int i);

namespace detail {

// Snapped chain for one segment as fine vertex-id pairs (v0 < v1 within each
// pair), in walk order from the lexicographically smaller snapped endpoint.
// Returns an empty chain when the endpoints coincide after snapping.
std::vector<std::pair<int, int>> snap_segment(int nx, const Vector2& a,
                                              const Vector2& b);

} // namespace detail

} // namespace msinv
