#pragma once

// Lattice geometry for the two percolation models.
//
// Model 1 (M1) is the oriented parity lattice
//   { (x, n) in Z^d x Z_+ : |x|_1 + n even }
// with directed edges (x, n) -> (x +- e_i, n + 1).
//
// Model 2 (M2) is the nearest-neighbour grid Z^d with undirected edges.
//
// Every edge has a canonical 64-bit id (see docs/edge_ids.md). Field sampling
// is keyed off the id, so the packing below is part of the on-disk contract.

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace ldp {

inline constexpr int kMaxDim = 3;

enum class Model : std::uint8_t { M1 = 1, M2 = 2 };

std::string to_string(Model model);
Model model_from_string(const std::string& s);

class LatticeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Point of Z^d, d <= kMaxDim. Unused trailing coordinates are zero.
struct Point {
  int d = 1;
  std::array<int, kMaxDim> c{};

  Point() = default;
  Point(std::initializer_list<int> coords);
  static Point zeros(int d);

  int& operator[](int i) { return c[static_cast<std::size_t>(i)]; }
  int operator[](int i) const { return c[static_cast<std::size_t>(i)]; }

  int l1() const;
  friend bool operator==(const Point&, const Point&) = default;
  friend auto operator<=>(const Point&, const Point&) = default;
};

/// Site of the oriented lattice: spatial point x and level n.
/// For M2 only `x` is meaningful and `n` is zero.
struct Site {
  Point x;
  int n = 0;

  Site() = default;
  Site(Point p, int level) : x(p), n(level) {}

  /// |x|_1 + n even.
  bool parity_ok() const { return ((x.l1() + n) & 1) == 0; }
  /// Reachable from the origin by a directed path.
  bool in_cone() const { return parity_ok() && x.l1() <= n; }

  friend bool operator==(const Site&, const Site&) = default;
  // Lexicographic on (n, x).
  friend auto operator<=>(const Site& a, const Site& b) {
    if (auto c = a.n <=> b.n; c != 0) return c;
    return a.x <=> b.x;
  }
};

std::string to_string(const Site& s);
std::string to_string(const Point& p);

using EdgeId = std::uint64_t;

/// Direction index of an M1 edge: 2*i for -e_i, 2*i+1 for +e_i.
struct Edge {
  Model model = Model::M1;
  Site tail;
  Site head;
  EdgeId id = 0;

  friend bool operator==(const Edge& a, const Edge& b) { return a.id == b.id; }
};

// ---- edge ids ------------------------------------------------------------

inline constexpr unsigned kEdgeIdVersion = 1;

/// Bits available per spatial coordinate in an id, by model and dimension.
int id_coord_bits(Model model, int d);
/// Largest |coordinate| representable in ids for (model, d).
int id_coord_limit(Model model, int d);

EdgeId m1_edge_id(const Site& tail, int direction);
EdgeId m2_edge_id(const Point& lower, int axis);

/// Builds the M1 edge out of `tail` in `direction`.
Edge m1_edge(const Site& tail, int direction);
/// Builds the M2 edge {a, b}; a and b must be neighbours.
Edge m2_edge(const Point& a, const Point& b);

/// Inverse of the id packing.
Edge decode_edge(EdgeId id);

struct DecodedM1 {
  int d;
  int level;
  Point x;
  int direction;
};
/// Cheap decode used in hot loops (no head reconstruction).
DecodedM1 decode_m1(EdgeId id);

// ---- windows -------------------------------------------------------------

/// Axis-aligned integer box [lo, hi] in Z^d (inclusive). Empty when any
/// lo_i > hi_i.
struct Box {
  Point lo;
  Point hi;

  static Box cube(int d, int lo, int hi);
  int d() const { return lo.d; }
  bool empty() const;
  bool contains(const Point& p) const;
  std::int64_t volume() const;
  friend bool operator==(const Box&, const Box&) = default;
};

/// Finite region of a model's graph. For M1, sites with level in
/// [level_lo, level_hi] and spatial point in `box`; an edge is inside when
/// both endpoints are. For M2, `box` alone.
struct Window {
  Model model = Model::M1;
  Box box;
  int level_lo = 0;
  int level_hi = 0;

  /// Smallest window covering the forward cone of the origin up to level n.
  static Window m1_cone(int d, int n);
  static Window m2_box(const Box& b);

  int d() const { return box.d(); }
  bool contains(const Site& s) const;
  bool contains(const Edge& e) const;
  bool contains(EdgeId id) const;
};

/// M1 block Xi_I(A) = union over n in I of Xi_n(A).
struct Block {
  Box space;
  int level_lo = 0;
  int level_hi = 0;

  bool empty() const { return space.empty() || level_lo > level_hi; }
};

// ---- enumeration ---------------------------------------------------------

/// Sites at level n reachable from the origin, in lexicographic order.
std::vector<Site> level_sites(int n, int d);

/// Parity-valid sites of the block, ordered by (n, x).
std::vector<Site> block_sites(const Block& b);

/// The 2d outgoing M1 edges of a site, in direction order.
std::vector<Edge> out_edges(const Site& s);

/// Index of the M1 dyadic shell containing tail level m: 0 for m in {0, 1},
/// otherwise floor(log2 m).
int shell_of_level(int m);
/// First and one-past-last tail levels of M1 shell k.
int shell_level_begin(int k);
int shell_level_end(int k);

/// Shell T_k.
///
/// M1: edges out of cone sites (x, m) with m in [2^k, 2^{k+1}); T_0 also holds
/// the two origin edges (level range [0, 2)). `max_level`, when >= 0, rejects
/// shells whose levels would exceed it.
///
/// M2 (d = 2): edges {x, y} inside `window` with 2^k <= |x_1| < 2^{k+1} or
/// 2^k <= |2^N - y_1| < 2^{k+1}, where x is the canonical lower endpoint and
/// y the upper one. For k = 0 this uses [0, 2) so the endpoints' own edges
/// are included.
std::vector<Edge> shell_edges_m1(int k, int d, int max_level = -1);
std::vector<Edge> shell_edges_m2(int k, int N, const Window& window);

/// Number of cone sites at level m (closed form for d = 1, counted otherwise).
std::int64_t cone_site_count(int m, int d);

/// All M1 edges out of cone sites with tail level < n.
std::vector<Edge> cone_edges(int n, int d);

/// Neighbours of p inside box, in lexicographic order.
std::vector<Point> grid_neighbors(const Point& p, const Box& box);

}  // namespace ldp
