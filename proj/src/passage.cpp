#include "ldp/passage.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <queue>

namespace ldp {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Dense indexing of the points of a box.
class Grid {
 public:
  explicit Grid(const Box& b) : box_(b) {
    std::int64_t s = 1;
    for (int i = 0; i < b.d(); ++i) {
      stride_[static_cast<std::size_t>(i)] = s;
      s *= b.hi[i] - b.lo[i] + 1;
    }
    size_ = b.empty() ? 0 : static_cast<std::size_t>(s);
  }

  const Box& box() const { return box_; }
  std::size_t size() const { return size_; }
  bool contains(const Point& p) const { return box_.contains(p); }

  std::size_t index(const Point& p) const {
    std::int64_t k = 0;
    for (int i = 0; i < box_.d(); ++i)
      k += (p[i] - box_.lo[i]) * stride_[static_cast<std::size_t>(i)];
    return static_cast<std::size_t>(k);
  }

  Point point(std::size_t k) const {
    Point p = Point::zeros(box_.d());
    auto r = static_cast<std::int64_t>(k);
    for (int i = box_.d() - 1; i >= 0; --i) {
      const auto s = stride_[static_cast<std::size_t>(i)];
      p[i] = box_.lo[i] + static_cast<int>(r / s);
      r %= s;
    }
    return p;
  }

 private:
  Box box_;
  std::array<std::int64_t, kMaxDim> stride_{};
  std::size_t size_ = 0;
};

// Nearest neighbours of p in lexicographic order.
std::vector<Point> sorted_neighbors(const Point& p) {
  std::vector<Point> out;
  for (int i = 0; i < p.d; ++i) {
    for (int s : {-1, 1}) {
      Point q = p;
      q[i] += s;
      out.push_back(q);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

int direction_between(const Point& from, const Point& to) {
  for (int i = 0; i < from.d; ++i) {
    const int diff = to[i] - from[i];
    if (diff == -1) return 2 * i;
    if (diff == 1) return 2 * i + 1;
  }
  throw PassageError("sites are not neighbours");
}

double m1_weight(const EdgeField& field, const Site& tail, const Point& to) {
  const Site head(to, tail.n + 1);
  if (!field.window().contains(tail) || !field.window().contains(head))
    throw PassageError("field window too small for edge " + to_string(tail) +
                       " -> " + to_string(head));
  return field.weight(m1_edge_id(tail, direction_between(tail.x, to)));
}

double m2_weight(const EdgeField& field, const Point& a, const Point& b) {
  const double t = field.weight(m2_edge(a, b).id);
  if (t < 0.0)
    throw PassageError("negative passage time on edge " + to_string(a) + "-" +
                       to_string(b));
  return t;
}

void require_model(const EdgeField& field, Model m) {
  if (field.model() != m)
    throw PassageError("operation needs a " + to_string(m) + " field");
}

// ---- Model 1 level sweep -------------------------------------------------

// Sites reachable from `starts` inside `box`, level by level, plus the
// best continuation value to the terminal set and the chosen next site.
struct Sweep {
  Grid grid;
  int level0 = 0;
  int steps = 0;
  std::vector<std::vector<char>> reach;
  std::vector<std::vector<double>> value;
  std::vector<std::vector<std::int32_t>> next;  // grid index, -1 at the end

  Sweep(const Box& box, int l0, int n) : grid(box), level0(l0), steps(n) {
    reach.assign(static_cast<std::size_t>(n + 1),
                 std::vector<char>(grid.size(), 0));
  }
};

void forward_reach(Sweep& sw, const std::vector<Site>& starts) {
  for (const Site& s : starts) sw.reach[0][sw.grid.index(s.x)] = 1;
  for (int t = 0; t < sw.steps; ++t) {
    bool any = false;
    const auto& cur = sw.reach[static_cast<std::size_t>(t)];
    auto& nxt = sw.reach[static_cast<std::size_t>(t + 1)];
    for (std::size_t i = 0; i < cur.size(); ++i) {
      if (!cur[i]) continue;
      for (const Point& q : sorted_neighbors(sw.grid.point(i))) {
        if (!sw.grid.contains(q)) continue;
        nxt[sw.grid.index(q)] = 1;
        any = true;
      }
    }
    if (!any)
      throw PassageError("path constraint empties level " +
                         std::to_string(sw.level0 + t + 1));
  }
}

// Backward max-plus DP. Terminal sites get value 0, other final sites -inf.
void backward_max(Sweep& sw, const EdgeField& field,
                  const std::optional<Box>& end_box) {
  const std::size_t n = static_cast<std::size_t>(sw.steps);
  sw.value.assign(n + 1, std::vector<double>(sw.grid.size(), -kInf));
  sw.next.assign(n + 1, std::vector<std::int32_t>(sw.grid.size(), -1));
  bool any_end = false;
  for (std::size_t i = 0; i < sw.grid.size(); ++i) {
    if (!sw.reach[n][i]) continue;
    if (end_box && !end_box->contains(sw.grid.point(i))) continue;
    sw.value[n][i] = 0.0;
    any_end = true;
  }
  if (!any_end) throw PassageError("no reachable terminal site");
  for (std::size_t t = n; t-- > 0;) {
    const int level = sw.level0 + static_cast<int>(t);
    for (std::size_t i = 0; i < sw.grid.size(); ++i) {
      if (!sw.reach[t][i]) continue;
      const Site s(sw.grid.point(i), level);
      double best = -kInf;
      std::int32_t arg = -1;
      for (const Point& q : sorted_neighbors(s.x)) {
        if (!sw.grid.contains(q)) continue;
        const std::size_t j = sw.grid.index(q);
        const double cont = sw.value[t + 1][j];
        if (cont == -kInf) continue;
        const double v = m1_weight(field, s, q) + cont;
        if (v > best) {
          best = v;
          arg = static_cast<std::int32_t>(j);
        }
      }
      sw.value[t][i] = best;
      sw.next[t][i] = arg;
    }
  }
}

std::vector<Site> trace(const Sweep& sw, const Point& start) {
  std::vector<Site> path{Site(start, sw.level0)};
  std::size_t i = sw.grid.index(start);
  for (int t = 0; t < sw.steps; ++t) {
    const std::int32_t j = sw.next[static_cast<std::size_t>(t)][i];
    i = static_cast<std::size_t>(j);
    path.emplace_back(sw.grid.point(i), sw.level0 + t + 1);
  }
  return path;
}

Box cone_box(const std::vector<Site>& starts, int n, int d) {
  Box b{starts[0].x, starts[0].x};
  b.lo.d = b.hi.d = d;
  for (const Site& s : starts) {
    for (int i = 0; i < d; ++i) {
      b.lo[i] = std::min(b.lo[i], s.x[i] - n);
      b.hi[i] = std::max(b.hi[i], s.x[i] + n);
    }
  }
  return b;
}

std::string describe_box(const Box& b) {
  return "[" + to_string(b.lo) + "," + to_string(b.hi) + "]";
}

// ---- Model 2 Dijkstra ----------------------------------------------------

// Predecessor relation: calls f(u, t_uv) for every u with an admissible step
// u -> v.
using Preds =
    std::function<void(const Point& v,
                       const std::function<void(const Point&, double)>& f)>;

struct Tree {
  std::vector<double> dist;
  std::vector<std::int64_t> next;  // toward the target set
};

// Distances to the target set along admissible steps. Parent ties go to the
// lexicographically smallest next site.
Tree reverse_dijkstra(const Grid& grid, const std::vector<Point>& targets,
                      const Preds& preds) {
  Tree tr;
  tr.dist.assign(grid.size(), kInf);
  tr.next.assign(grid.size(), -1);
  std::vector<char> done(grid.size(), 0);
  using Item = std::pair<double, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  for (const Point& p : targets) {
    const std::size_t k = grid.index(p);
    tr.dist[k] = 0.0;
    pq.emplace(0.0, k);
  }
  while (!pq.empty()) {
    const auto [dv, v] = pq.top();
    pq.pop();
    if (done[v]) continue;
    done[v] = 1;
    const Point pv = grid.point(v);
    preds(pv, [&](const Point& u, double w) {
      const std::size_t ku = grid.index(u);
      if (done[ku]) return;
      const double nd = dv + w;
      if (nd < tr.dist[ku]) {
        tr.dist[ku] = nd;
        tr.next[ku] = static_cast<std::int64_t>(v);
        pq.emplace(nd, ku);
      } else if (nd == tr.dist[ku] &&
                 pv < grid.point(static_cast<std::size_t>(tr.next[ku]))) {
        tr.next[ku] = static_cast<std::int64_t>(v);
      }
    });
  }
  return tr;
}

std::vector<Site> trace_tree(const Grid& grid, const Tree& tr,
                             const Point& start) {
  std::vector<Site> path{Site(start, 0)};
  std::size_t k = grid.index(start);
  while (tr.next[k] >= 0) {
    k = static_cast<std::size_t>(tr.next[k]);
    path.emplace_back(grid.point(k), 0);
  }
  return path;
}

Preds grid_preds(const EdgeField& field, const Grid& grid) {
  return [&field, &grid](const Point& v,
                         const std::function<void(const Point&, double)>& f) {
    for (const Point& u : sorted_neighbors(v)) {
      if (grid.contains(u)) f(u, m2_weight(field, u, v));
    }
  };
}

Point axis_point(int d, int x1) {
  Point p = Point::zeros(d);
  p[0] = x1;
  return p;
}

// Points {x1} x [-r, r]^{d-1}.
std::vector<Point> face(int d, int x1, int r) {
  std::vector<Point> out;
  Box b = Box::cube(d, -r, r);
  b.lo[0] = b.hi[0] = x1;
  const Grid g(b);
  for (std::size_t k = 0; k < g.size(); ++k) out.push_back(g.point(k));
  return out;
}

int strip_halfwidth(int N, double delta) {
  if (N < 1 || N > 20) throw PassageError("N out of range");
  int e = 0;
  const double m = std::frexp(delta, &e);
  if (!(delta > 0.0 && delta <= 0.5) || m != 0.5)
    throw PassageError("delta must be a negative power of two, <= 1/2");
  const double w = std::ldexp(delta, N);
  if (w < 1.0) throw PassageError("delta * 2^N must be at least 1");
  return static_cast<int>(w);
}

void require_psi_window(const EdgeField& field, int L, int w) {
  require_model(field, Model::M2);
  if (field.d() != 2) throw PassageError("restricted passage needs d = 2");
  const Box need{Point{0, -w}, Point{L, w}};
  if (!field.window().box.contains(need.lo) ||
      !field.window().box.contains(need.hi))
    throw PassageError("field window must cover " + describe_box(need));
}

}  // namespace

// ---- paths ---------------------------------------------------------------

void check_path(Model model, const std::vector<Site>& path) {
  for (std::size_t i = 1; i < path.size(); ++i) {
    const Site& a = path[i - 1];
    const Site& b = path[i];
    int l1 = 0;
    for (int k = 0; k < a.x.d; ++k) l1 += std::abs(b.x[k] - a.x[k]);
    const bool ok = model == Model::M1
                        ? (l1 == 1 && b.n == a.n + 1 && a.parity_ok())
                        : (l1 == 1 && a.n == 0 && b.n == 0);
    if (!ok)
      throw PassageError("invalid step " + to_string(a) + " -> " +
                         to_string(b));
  }
}

double path_value(const EdgeField& field, const std::vector<Site>& path) {
  check_path(field.model(), path);
  double v = 0.0;
  for (std::size_t i = 1; i < path.size(); ++i) {
    if (field.model() == Model::M1)
      v += field.weight(m1_edge_id(path[i - 1],
                                   direction_between(path[i - 1].x,
                                                     path[i].x)));
    else
      v += field.weight(m2_edge(path[i - 1].x, path[i].x).id);
  }
  return v;
}

nlohmann::json to_json(const PassageResult& r) {
  auto site = [&](const Site& s) {
    nlohmann::json a = nlohmann::json::array();
    for (int i = 0; i < s.x.d; ++i) a.push_back(s.x[i]);
    if (r.model == Model::M1) a.push_back(s.n);
    return a;
  };
  nlohmann::json path = nlohmann::json::array();
  for (const Site& s : r.path) path.push_back(site(s));
  return {{"model", to_string(r.model)},
          {"value", r.value},
          {"start", site(r.start)},
          {"end_condition", r.end_condition},
          {"path", path}};
}

// ---- Model 1 -------------------------------------------------------------

PassageResult last_passage(const EdgeField& field, int n,
                           const PathConstraint& constraint) {
  require_model(field, Model::M1);
  if (n < 1) throw PassageError("horizon must be >= 1");
  const int d = field.d();
  std::vector<Site> starts = constraint.starts;
  if (starts.empty()) starts.emplace_back(Point::zeros(d), 0);
  for (const Site& s : starts) {
    if (s.n != starts[0].n) throw PassageError("starts on different levels");
    if (!s.parity_ok()) throw PassageError("start violates parity");
  }
  const Box box = constraint.box ? *constraint.box : cone_box(starts, n, d);
  for (const Site& s : starts) {
    if (!box.contains(s.x)) throw PassageError("start outside constraint box");
  }
  std::sort(starts.begin(), starts.end());

  Sweep sw(box, starts[0].n, n);
  forward_reach(sw, starts);
  backward_max(sw, field, constraint.end_box);

  const Site* best = nullptr;
  double best_v = -kInf;
  for (const Site& s : starts) {
    const double v = sw.value[0][sw.grid.index(s.x)];
    if (v > best_v) {
      best_v = v;
      best = &s;
    }
  }
  if (!best) throw PassageError("no admissible path");

  PassageResult r;
  r.model = Model::M1;
  r.value = best_v;
  r.start = *best;
  r.path = trace(sw, best->x);
  r.end_condition = "level " + std::to_string(starts[0].n + n);
  if (constraint.end_box) r.end_condition += " in " + describe_box(*constraint.end_box);
  return r;
}

MinimaxResult minimax_block_value(const EdgeField& field, const Block& b) {
  require_model(field, Model::M1);
  if (b.empty() || b.level_hi <= b.level_lo)
    throw PassageError("block needs a nonempty box and at least one step");
  const std::vector<Site> entries =
      block_sites(Block{b.space, b.level_lo, b.level_lo});
  if (entries.empty()) throw PassageError("block entry level empty under parity");
  const int n = b.level_hi - b.level_lo;

  Sweep sw(b.space, b.level_lo, n);
  forward_reach(sw, entries);
  backward_max(sw, field, std::nullopt);

  MinimaxResult out;
  out.value = kInf;
  for (const Site& s : entries) {
    const double v = sw.value[0][sw.grid.index(s.x)];
    if (v == -kInf)
      throw PassageError("entry site " + to_string(s) +
                         " has no block-confined path");
    out.per_start[s] = v;
    if (v < out.value) {
      out.value = v;
      out.argmin = s;
    }
  }
  PassageResult& r = out.best_path;
  r.model = Model::M1;
  r.value = out.per_start[out.argmin];
  r.start = out.argmin;
  r.path = trace(sw, out.argmin.x);
  r.end_condition = "level " + std::to_string(b.level_hi) + " in " +
                    describe_box(b.space);
  return out;
}

std::map<Site, double> min_negative_part_paths(const EdgeField& field,
                                               int from_level, int to_level,
                                               const Box& strip) {
  require_model(field, Model::M1);
  if (from_level < 0 || to_level <= from_level)
    throw PassageError("need 0 <= from_level < to_level");
  if (strip.d() != field.d()) throw PassageError("strip dimension mismatch");
  std::vector<Site> starts;
  for (const Site& s : level_sites(from_level, field.d()))
    if (strip.contains(s.x)) starts.push_back(s);
  if (starts.empty()) throw PassageError("strip empties the start level");

  const int n = to_level - from_level;
  Sweep sw(strip, from_level, n);
  forward_reach(sw, starts);
  std::vector<double> cost(sw.grid.size(), kInf), nxt;
  for (const Site& s : starts) cost[sw.grid.index(s.x)] = 0.0;
  for (int t = 0; t < n; ++t) {
    nxt.assign(sw.grid.size(), kInf);
    for (std::size_t i = 0; i < cost.size(); ++i) {
      if (cost[i] == kInf) continue;
      const Site s(sw.grid.point(i), from_level + t);
      for (const Point& q : sorted_neighbors(s.x)) {
        if (!sw.grid.contains(q)) continue;
        const double x = m1_weight(field, s, q);
        const double c = cost[i] + (x < 0.0 ? -x : 0.0);
        auto& slot = nxt[sw.grid.index(q)];
        slot = std::min(slot, c);
      }
    }
    cost.swap(nxt);
  }
  std::map<Site, double> out;
  for (std::size_t i = 0; i < cost.size(); ++i)
    if (cost[i] < kInf) out.emplace(Site(sw.grid.point(i), to_level), cost[i]);
  return out;
}

std::map<Site, double> last_passage_to_sites(const EdgeField& field, int n) {
  require_model(field, Model::M1);
  if (n < 1) throw PassageError("horizon must be >= 1");
  const int d = field.d();
  const Site origin(Point::zeros(d), 0);
  Sweep sw(cone_box({origin}, n, d), 0, n);
  std::vector<double> best(sw.grid.size(), -kInf), nxt;
  best[sw.grid.index(origin.x)] = 0.0;
  for (int t = 0; t < n; ++t) {
    nxt.assign(sw.grid.size(), -kInf);
    for (std::size_t i = 0; i < best.size(); ++i) {
      if (best[i] == -kInf) continue;
      const Site s(sw.grid.point(i), t);
      for (const Point& q : sorted_neighbors(s.x)) {
        auto& slot = nxt[sw.grid.index(q)];
        slot = std::max(slot, best[i] + m1_weight(field, s, q));
      }
    }
    best.swap(nxt);
  }
  std::map<Site, double> out;
  for (std::size_t i = 0; i < best.size(); ++i)
    if (best[i] > -kInf) out.emplace(Site(sw.grid.point(i), n), best[i]);
  return out;
}

// ---- Model 2 -------------------------------------------------------------

PassageResult first_passage_between(const EdgeField& field, const Point& from,
                                    const Point& to) {
  require_model(field, Model::M2);
  const Grid grid(field.window().box);
  if (!grid.contains(from) || !grid.contains(to))
    throw PassageError("field window must contain both endpoints");
  const Tree tr = reverse_dijkstra(grid, {to}, grid_preds(field, grid));
  PassageResult r;
  r.model = Model::M2;
  r.value = tr.dist[grid.index(from)];
  r.start = Site(from, 0);
  r.path = trace_tree(grid, tr, from);
  r.end_condition = "point " + to_string(to);
  return r;
}

std::map<Point, double> first_passage_distances(const EdgeField& field,
                                                const Point& source,
                                                const Box& region) {
  require_model(field, Model::M2);
  const Box& w = field.window().box;
  if (region.empty() || !w.contains(region.lo) || !w.contains(region.hi))
    throw PassageError("region " + describe_box(region) +
                       " outside the field window");
  const Grid grid(region);
  if (!grid.contains(source)) throw PassageError("source outside region");
  const Tree tr = reverse_dijkstra(grid, {source}, grid_preds(field, grid));
  std::map<Point, double> out;
  for (std::size_t k = 0; k < grid.size(); ++k)
    out.emplace_hint(out.end(), grid.point(k), tr.dist[k]);
  return out;
}

PassageResult first_passage_point(const EdgeField& field, int n) {
  require_model(field, Model::M2);
  if (n < 1) throw PassageError("distance must be >= 1");
  return first_passage_between(field, Point::zeros(field.d()),
                               axis_point(field.d(), n));
}

PassageResult first_passage_plane(const EdgeField& field, int n) {
  require_model(field, Model::M2);
  if (n < 1) throw PassageError("distance must be >= 1");
  const int d = field.d();
  const Grid grid(field.window().box);
  std::vector<Point> sources;
  for (const Point& p : face(d, 0, n))
    if (grid.contains(p)) sources.push_back(p);
  if (!grid.contains(Point::zeros(d)))
    throw PassageError("field window must contain the origin");
  std::vector<Point> targets;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const Point p = grid.point(k);
    if (p[0] == n) targets.push_back(p);
  }
  if (targets.empty()) throw PassageError("field window misses x_1 = n");
  const Tree tr = reverse_dijkstra(grid, targets, grid_preds(field, grid));
  const Point* best = nullptr;
  double best_v = kInf;
  for (const Point& p : sources) {  // sources are in lexicographic order
    const double v = tr.dist[grid.index(p)];
    if (v < best_v) {
      best_v = v;
      best = &p;
    }
  }
  PassageResult r;
  r.model = Model::M2;
  r.value = best_v;
  r.start = Site(*best, 0);
  r.path = trace_tree(grid, tr, *best);
  r.end_condition = "hyperplane x1=" + std::to_string(n);
  return r;
}

bool psi_vertex_ok(const Point& p, int L, int w) {
  const int x1 = p[0];
  const int a = std::abs(p[1]);
  if (x1 < 0 || x1 > L) return false;
  if (x1 < w && a > x1) return false;
  if (x1 >= L - w && a > L - x1) return false;
  if (x1 >= w && x1 <= L - w && a > w) return false;
  return true;
}

bool psi_step_ok(const Point& from, const Point& to, int L, int w) {
  if (!psi_vertex_ok(from, L, w) || !psi_vertex_ok(to, L, w)) return false;
  const bool oriented = from[0] < w || from[0] >= L - w;
  return !oriented || to[0] >= from[0];
}

PassageResult restricted_first_passage(const EdgeField& field, int N,
                                       double delta) {
  const int w = strip_halfwidth(N, delta);
  const int L = 1 << N;
  require_psi_window(field, L, w);
  const Grid grid(Box{Point{0, -w}, Point{L, w}});
  const Preds preds = [&](const Point& v,
                          const std::function<void(const Point&, double)>& f) {
    if (!psi_vertex_ok(v, L, w)) return;
    for (const Point& u : sorted_neighbors(v)) {
      if (grid.contains(u) && psi_step_ok(u, v, L, w))
        f(u, m2_weight(field, u, v));
    }
  };
  const Point origin{0, 0};
  const Tree tr = reverse_dijkstra(grid, {Point{L, 0}}, preds);
  PassageResult r;
  r.model = Model::M2;
  r.value = tr.dist[grid.index(origin)];
  r.start = Site(origin, 0);
  r.path = trace_tree(grid, tr, origin);
  r.end_condition = "point " + to_string(Point{L, 0}) + " within Psi(delta=" +
                    std::to_string(delta) + ")";
  return r;
}

// ---- oracles -------------------------------------------------------------

PassageResult exhaustive_last_passage(const EdgeField& field, int n,
                                      std::int64_t cap) {
  require_model(field, Model::M1);
  if (n < 1) throw PassageError("horizon must be >= 1");
  const int d = field.d();
  const double count = std::pow(2.0 * d, n);
  if (count > static_cast<double>(cap))
    throw EnumerationCapError("path enumeration would exceed cap of " +
                              std::to_string(cap) + " paths");
  PassageResult best;
  best.model = Model::M1;
  best.value = -kInf;
  std::vector<Site> path{Site(Point::zeros(d), 0)};
  std::function<void(double)> dfs = [&](double acc) {
    if (static_cast<int>(path.size()) == n + 1) {
      if (acc > best.value) {
        best.value = acc;
        best.path = path;
      }
      return;
    }
    const Site s = path.back();
    for (const Point& q : sorted_neighbors(s.x)) {
      const Edge e = m1_edge(s, direction_between(s.x, q));
      path.push_back(e.head);
      dfs(acc + field.weight(e.id));
      path.pop_back();
    }
  };
  dfs(0.0);
  best.start = best.path.front();
  best.end_condition = "level " + std::to_string(n);
  return best;
}

namespace {

// Self-avoiding walks from `start` that stop at the first target site, up
// to max_length edges, staying in `box` and respecting `step_ok`.
struct SawSearch {
  const EdgeField& field;
  Box box;
  int max_length;
  std::int64_t cap;
  std::function<bool(const Point&)> is_target;
  std::function<bool(const Point&, const Point&)> step_ok;

  SawSearch(const EdgeField& f, Box b, int len, std::int64_t c,
            std::function<bool(const Point&)> target,
            std::function<bool(const Point&, const Point&)> step)
      : field(f), box(b), max_length(len), cap(c),
        is_target(std::move(target)), step_ok(std::move(step)) {}

  std::int64_t completed = 0;
  double best = kInf;
  std::vector<Point> best_path;

  void run(const Point& start) {
    std::vector<Point> path{start};
    dfs(path, 0.0);
  }

  void dfs(std::vector<Point>& path, double acc) {
    const Point cur = path.back();
    if (is_target(cur)) {
      if (++completed > cap)
        throw EnumerationCapError("path enumeration exceeded cap of " +
                                  std::to_string(cap) + " paths");
      if (acc < best) {
        best = acc;
        best_path = path;
      }
      return;
    }
    if (static_cast<int>(path.size()) - 1 == max_length) return;
    for (const Point& q : sorted_neighbors(cur)) {
      if (!box.contains(q)) continue;
      if (step_ok && !step_ok(cur, q)) continue;
      if (std::find(path.begin(), path.end(), q) != path.end()) continue;
      const double t = field.weight(m2_edge(cur, q).id);
      if (t < 0.0) throw PassageError("negative passage time");
      path.push_back(q);
      dfs(path, acc + t);
      path.pop_back();
    }
  }
};

PassageResult saw_result(const SawSearch& s, const std::string& end) {
  if (s.best_path.empty()) throw PassageError("no path within length bound");
  PassageResult r;
  r.model = Model::M2;
  r.value = s.best;
  for (const Point& p : s.best_path) r.path.emplace_back(p, 0);
  r.start = r.path.front();
  r.end_condition = end;
  return r;
}

}  // namespace

PassageResult exhaustive_first_passage_point(const EdgeField& field, int n,
                                             int max_length, std::int64_t cap) {
  require_model(field, Model::M2);
  const Point target = axis_point(field.d(), n);
  SawSearch s{field, field.window().box, max_length, cap,
              [&](const Point& p) { return p == target; }, nullptr};
  s.run(Point::zeros(field.d()));
  return saw_result(s, "point " + to_string(target));
}

PassageResult exhaustive_first_passage_plane(const EdgeField& field, int n,
                                             int max_length, std::int64_t cap) {
  require_model(field, Model::M2);
  SawSearch s{field, field.window().box, max_length, cap,
              [&](const Point& p) { return p[0] == n; }, nullptr};
  for (const Point& src : face(field.d(), 0, n)) {
    if (field.window().box.contains(src)) s.run(src);
  }
  return saw_result(s, "hyperplane x1=" + std::to_string(n));
}

double exhaustive_restricted_first_passage(const EdgeField& field, int N,
                                           double delta, std::int64_t cap) {
  const int w = strip_halfwidth(N, delta);
  const int L = 1 << N;
  require_psi_window(field, L, w);
  const Point target{L, 0};
  SawSearch s{field, Box{Point{0, -w}, Point{L, w}},
              std::numeric_limits<int>::max(), cap,
              [&](const Point& p) { return p == target; },
              [&](const Point& a, const Point& b) {
                return psi_step_ok(a, b, L, w);
              }};
  s.run(Point{0, 0});
  return s.best;
}

double bellman_ford_restricted_first_passage(const EdgeField& field, int N,
                                             double delta) {
  const int w = strip_halfwidth(N, delta);
  const int L = 1 << N;
  require_psi_window(field, L, w);
  // Admissible directed steps, then relax until stable.
  struct Arc {
    Point from, to;
    double t;
  };
  std::vector<Arc> arcs;
  std::map<Point, double> dist;
  for (int x1 = 0; x1 <= L; ++x1) {
    for (int x2 = -w; x2 <= w; ++x2) {
      const Point p{x1, x2};
      if (!psi_vertex_ok(p, L, w)) continue;
      dist[p] = kInf;
      for (const Point& q : {Point{x1 + 1, x2}, Point{x1 - 1, x2},
                             Point{x1, x2 + 1}, Point{x1, x2 - 1}}) {
        if (psi_step_ok(p, q, L, w))
          arcs.push_back({p, q, field.weight(m2_edge(p, q).id)});
      }
    }
  }
  dist[Point{0, 0}] = 0.0;
  for (bool changed = true; changed;) {
    changed = false;
    for (const Arc& a : arcs) {
      const double c = dist[a.from] + a.t;
      if (c < dist[a.to]) {
        dist[a.to] = c;
        changed = true;
      }
    }
  }
  return dist[Point{L, 0}];
}

}  // namespace ldp
