#include "ldp/lattice.hpp"

#include <algorithm>
#include <cstdlib>
#include <sstream>

namespace ldp {

namespace {

constexpr int kM1LevelBits = 24;
constexpr int kM1SpatialBits = 28;
constexpr int kM2SpatialBits = 52;

void check_dim(int d) {
  if (d < 1 || d > kMaxDim) {
    throw LatticeError("dimension must be in [1, " + std::to_string(kMaxDim) +
                       "], got " + std::to_string(d));
  }
}

std::uint64_t header(Model model, int d) {
  return (static_cast<std::uint64_t>(model) << 62) |
         (static_cast<std::uint64_t>(d - 1) << 60) |
         (static_cast<std::uint64_t>(kEdgeIdVersion) << 56);
}

std::uint64_t pack_coords(const Point& p, int bits) {
  const std::int64_t bias = std::int64_t{1} << (bits - 1);
  std::uint64_t out = 0;
  for (int i = 0; i < p.d; ++i) {
    const std::int64_t v = p[i] + bias;
    if (v < 0 || v >= 2 * bias) {
      throw LatticeError("coordinate " + std::to_string(p[i]) +
                         " outside edge-id range");
    }
    out |= static_cast<std::uint64_t>(v) << (bits * i);
  }
  return out;
}

Point unpack_coords(std::uint64_t packed, int bits, int d) {
  const std::int64_t bias = std::int64_t{1} << (bits - 1);
  const std::uint64_t mask = (std::uint64_t{1} << bits) - 1;
  Point p = Point::zeros(d);
  for (int i = 0; i < d; ++i) {
    p[i] = static_cast<int>(
        static_cast<std::int64_t>((packed >> (bits * i)) & mask) - bias);
  }
  return p;
}

}  // namespace

std::string to_string(Model model) { return model == Model::M1 ? "M1" : "M2"; }

Model model_from_string(const std::string& s) {
  if (s == "M1" || s == "m1" || s == "1") return Model::M1;
  if (s == "M2" || s == "m2" || s == "2") return Model::M2;
  throw LatticeError("unknown model '" + s + "'");
}

Point::Point(std::initializer_list<int> coords) {
  check_dim(static_cast<int>(coords.size()));
  d = static_cast<int>(coords.size());
  std::copy(coords.begin(), coords.end(), c.begin());
}

Point Point::zeros(int d) {
  check_dim(d);
  Point p;
  p.d = d;
  return p;
}

int Point::l1() const {
  int s = 0;
  for (int i = 0; i < d; ++i) s += std::abs(c[static_cast<std::size_t>(i)]);
  return s;
}

std::string to_string(const Point& p) {
  std::ostringstream os;
  os << '(';
  for (int i = 0; i < p.d; ++i) os << (i ? "," : "") << p[i];
  os << ')';
  return os.str();
}

std::string to_string(const Site& s) {
  std::ostringstream os;
  os << '(';
  for (int i = 0; i < s.x.d; ++i) os << s.x[i] << ',';
  os << s.n << ')';
  return os.str();
}

int id_coord_bits(Model model, int d) {
  check_dim(d);
  return (model == Model::M1 ? kM1SpatialBits : kM2SpatialBits) / d;
}

int id_coord_limit(Model model, int d) {
  return static_cast<int>((std::int64_t{1} << (id_coord_bits(model, d) - 1)) -
                          1);
}

EdgeId m1_edge_id(const Site& tail, int direction) {
  const int d = tail.x.d;
  check_dim(d);
  if (direction < 0 || direction >= 2 * d) {
    throw LatticeError("M1 direction out of range");
  }
  if (tail.n < 0 || tail.n >= (1 << kM1LevelBits)) {
    throw LatticeError("level outside edge-id range");
  }
  return header(Model::M1, d) |
         (static_cast<std::uint64_t>(tail.n) << 32) |
         (pack_coords(tail.x, id_coord_bits(Model::M1, d)) << 4) |
         static_cast<std::uint64_t>(direction);
}

EdgeId m2_edge_id(const Point& lower, int axis) {
  const int d = lower.d;
  check_dim(d);
  if (axis < 0 || axis >= d) throw LatticeError("M2 axis out of range");
  return header(Model::M2, d) |
         (pack_coords(lower, id_coord_bits(Model::M2, d)) << 4) |
         static_cast<std::uint64_t>(axis);
}

Edge m1_edge(const Site& tail, int direction) {
  Edge e;
  e.model = Model::M1;
  e.tail = tail;
  e.head = tail;
  e.head.n += 1;
  e.head.x[direction / 2] += (direction & 1) ? 1 : -1;
  e.id = m1_edge_id(tail, direction);
  return e;
}

Edge m2_edge(const Point& a, const Point& b) {
  if (a.d != b.d) throw LatticeError("dimension mismatch");
  int axis = -1;
  int diff = 0;
  for (int i = 0; i < a.d; ++i) {
    if (a[i] != b[i]) {
      if (axis >= 0) throw LatticeError("points are not neighbours");
      axis = i;
      diff = b[i] - a[i];
    }
  }
  if (axis < 0 || std::abs(diff) != 1) {
    throw LatticeError("points are not neighbours");
  }
  Edge e;
  e.model = Model::M2;
  const Point& lo = diff > 0 ? a : b;
  const Point& hi = diff > 0 ? b : a;
  e.tail = Site(lo, 0);
  e.head = Site(hi, 0);
  e.id = m2_edge_id(lo, axis);
  return e;
}

DecodedM1 decode_m1(EdgeId id) {
  const int d = static_cast<int>((id >> 60) & 0x3) + 1;
  DecodedM1 out;
  out.d = d;
  out.level = static_cast<int>((id >> 32) & ((1u << kM1LevelBits) - 1));
  out.x = unpack_coords((id >> 4) & ((std::uint64_t{1} << kM1SpatialBits) - 1),
                        id_coord_bits(Model::M1, d), d);
  out.direction = static_cast<int>(id & 0xF);
  return out;
}

Edge decode_edge(EdgeId id) {
  const auto model = static_cast<Model>(id >> 62);
  const auto version = static_cast<unsigned>((id >> 56) & 0xF);
  if (version != kEdgeIdVersion) {
    throw LatticeError("unsupported edge-id version " +
                       std::to_string(version));
  }
  if (model == Model::M1) {
    const DecodedM1 m = decode_m1(id);
    return m1_edge(Site(m.x, m.level), m.direction);
  }
  if (model == Model::M2) {
    const int d = static_cast<int>((id >> 60) & 0x3) + 1;
    const Point lo =
        unpack_coords((id >> 4) & ((std::uint64_t{1} << kM2SpatialBits) - 1),
                      id_coord_bits(Model::M2, d), d);
    Point hi = lo;
    hi[static_cast<int>(id & 0xF)] += 1;
    return m2_edge(lo, hi);
  }
  throw LatticeError("malformed edge id");
}

// ---- windows -------------------------------------------------------------

Box Box::cube(int d, int lo, int hi) {
  Box b{Point::zeros(d), Point::zeros(d)};
  for (int i = 0; i < d; ++i) {
    b.lo[i] = lo;
    b.hi[i] = hi;
  }
  return b;
}

bool Box::empty() const {
  for (int i = 0; i < lo.d; ++i) {
    if (lo[i] > hi[i]) return true;
  }
  return false;
}

bool Box::contains(const Point& p) const {
  if (p.d != lo.d) return false;
  for (int i = 0; i < p.d; ++i) {
    if (p[i] < lo[i] || p[i] > hi[i]) return false;
  }
  return true;
}

std::int64_t Box::volume() const {
  if (empty()) return 0;
  std::int64_t v = 1;
  for (int i = 0; i < lo.d; ++i) v *= hi[i] - lo[i] + 1;
  return v;
}

Window Window::m1_cone(int d, int n) {
  Window w;
  w.model = Model::M1;
  w.box = Box::cube(d, -n, n);
  w.level_lo = 0;
  w.level_hi = n;
  return w;
}

Window Window::m2_box(const Box& b) {
  Window w;
  w.model = Model::M2;
  w.box = b;
  return w;
}

bool Window::contains(const Site& s) const {
  if (!box.contains(s.x)) return false;
  return model == Model::M2 || (s.n >= level_lo && s.n <= level_hi);
}

bool Window::contains(const Edge& e) const {
  return e.model == model && contains(e.tail) && contains(e.head);
}

bool Window::contains(EdgeId id) const { return contains(decode_edge(id)); }

// ---- enumeration ---------------------------------------------------------

namespace {

// Visits every point of the box in lexicographic order.
template <class F>
void for_each_point(const Box& b, F&& f) {
  if (b.empty()) return;
  Point p = b.lo;
  const int d = b.d();
  while (true) {
    f(p);
    int i = d - 1;
    while (i >= 0) {
      if (p[i] < b.hi[i]) {
        ++p[i];
        break;
      }
      p[i] = b.lo[i];
      --i;
    }
    if (i < 0) return;
  }
}

}  // namespace

std::vector<Site> level_sites(int n, int d) {
  check_dim(d);
  if (n < 0) throw LatticeError("level must be nonnegative");
  std::vector<Site> out;
  for_each_point(Box::cube(d, -n, n), [&](const Point& p) {
    Site s(p, n);
    if (s.in_cone()) out.push_back(s);
  });
  return out;
}

std::vector<Site> block_sites(const Block& b) {
  std::vector<Site> out;
  if (b.empty()) return out;
  for (int n = b.level_lo; n <= b.level_hi; ++n) {
    for_each_point(b.space, [&](const Point& p) {
      Site s(p, n);
      if (s.parity_ok()) out.push_back(s);
    });
  }
  return out;
}

std::vector<Edge> out_edges(const Site& s) {
  std::vector<Edge> out;
  out.reserve(static_cast<std::size_t>(2 * s.x.d));
  for (int dir = 0; dir < 2 * s.x.d; ++dir) out.push_back(m1_edge(s, dir));
  return out;
}

int shell_of_level(int m) {
  if (m < 0) throw LatticeError("negative level");
  if (m < 2) return 0;
  int k = 0;
  while ((2 << k) <= m) ++k;
  return k;
}

int shell_level_begin(int k) { return k == 0 ? 0 : (1 << k); }
int shell_level_end(int k) { return 2 << k; }

std::int64_t cone_site_count(int m, int d) {
  if (d == 1) return m + 1;
  return static_cast<std::int64_t>(level_sites(m, d).size());
}

std::vector<Edge> shell_edges_m1(int k, int d, int max_level) {
  if (k < 0) throw LatticeError("shell index must be nonnegative");
  if (k > 22) throw LatticeError("shell index too large");
  const int end = shell_level_end(k);
  if (max_level >= 0 && end > max_level) {
    throw LatticeError("shell T_" + std::to_string(k) +
                       " exceeds the configured window (needs level " +
                       std::to_string(end) + ")");
  }
  std::vector<Edge> out;
  for (int m = shell_level_begin(k); m < end; ++m) {
    for (const Site& s : level_sites(m, d)) {
      for (int dir = 0; dir < 2 * d; ++dir) out.push_back(m1_edge(s, dir));
    }
  }
  return out;
}

std::vector<Edge> shell_edges_m2(int k, int N, const Window& window) {
  if (window.model != Model::M2 || window.d() != 2) {
    throw LatticeError("M2 shells require a 2-d M2 window");
  }
  if (k < 0 || N < 1 || N > 24) throw LatticeError("bad shell parameters");
  const int lo = k == 0 ? 0 : (1 << k);
  const int hi = 2 << k;
  const int L = 1 << N;
  std::vector<Edge> out;
  for_each_point(window.box, [&](const Point& p) {
    for (int axis = 0; axis < 2; ++axis) {
      Point q = p;
      q[axis] += 1;
      if (!window.box.contains(q)) continue;
      const int near_start = std::abs(p[0]);
      const int near_end = std::abs(L - q[0]);
      if ((near_start >= lo && near_start < hi) ||
          (near_end >= lo && near_end < hi)) {
        out.push_back(m2_edge(p, q));
      }
    }
  });
  return out;
}

std::vector<Edge> cone_edges(int n, int d) {
  std::vector<Edge> out;
  for (int m = 0; m < n; ++m) {
    for (const Site& s : level_sites(m, d)) {
      for (int dir = 0; dir < 2 * d; ++dir) out.push_back(m1_edge(s, dir));
    }
  }
  return out;
}

std::vector<Point> grid_neighbors(const Point& p, const Box& box) {
  std::vector<Point> out;
  for (int i = 0; i < p.d; ++i) {
    Point q = p;
    q[i] -= 1;
    if (box.contains(q)) out.push_back(q);
  }
  for (int i = p.d - 1; i >= 0; --i) {
    Point q = p;
    q[i] += 1;
    if (box.contains(q)) out.push_back(q);
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace ldp
