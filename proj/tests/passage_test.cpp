#include "ldp/passage.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <gtest/gtest.h>

namespace ldp {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Edge origin_edge(int direction) {
  return m1_edge(Site(Point{0}, 0), direction);
}

// Max over the 2^n paths of a d = 1 field, one bitmask per path.
double mask_max(const EdgeField& f, int n) {
  double best = -kInf;
  for (int mask = 0; mask < (1 << n); ++mask) {
    Site s(Point{0}, 0);
    double v = 0.0;
    for (int t = 0; t < n; ++t) {
      const int dir = (mask >> t) & 1;
      const Edge e = m1_edge(s, dir);
      v += f.weight(e);
      s = e.head;
    }
    best = std::max(best, v);
  }
  return best;
}

TEST(LastPassage, SingleStepTakesLargerEdge) {
  TableField f(Window::m1_cone(1, 1));
  f.set(origin_edge(0), -0.5);
  f.set(origin_edge(1), 2.0);
  const auto r = last_passage(f, 1);
  EXPECT_EQ(r.value, 2.0);
  ASSERT_EQ(r.path.size(), 2u);
  EXPECT_EQ(r.path[1], Site(Point{1}, 1));
}

TEST(LastPassage, ConstantFieldAndLeftmostTieBreak) {
  for (int d = 1; d <= 2; ++d) {
    const TableField f(Window::m1_cone(d, 9), 1.5);
    const auto r = last_passage(f, 9);
    EXPECT_DOUBLE_EQ(r.value, 13.5);
    // Every next site ties; the smallest one is always -e_1.
    for (int t = 0; t <= 9; ++t) EXPECT_EQ(r.path[t].x[0], -t);
  }
}

TEST(LastPassage, MatchesExhaustiveOnGaussianFields) {
  const auto model = WeightModel::gaussian(0, 1);
  for (int n = 1; n <= 12; ++n) {
    for (std::uint64_t rep = 0; rep < 20; ++rep) {
      const FieldSample f(derive_seed(1234, rep), Window::m1_cone(1, n), model);
      const auto r = last_passage(f, n);
      const auto oracle = exhaustive_last_passage(f, n);
      EXPECT_NEAR(r.value, oracle.value, 1e-9);
      EXPECT_NEAR(r.value, mask_max(f, n), 1e-9);
      EXPECT_NEAR(path_value(f, r.path), r.value, 1e-9);
      EXPECT_EQ(r.path.size(), static_cast<std::size_t>(n + 1));
    }
  }
}

TEST(LastPassage, TwoDimensionsMatchesOracle) {
  const auto model = WeightModel::discrete({-1, 0.5, 2}, {0.3, 0.4, 0.3});
  for (std::uint64_t rep = 0; rep < 30; ++rep) {
    const FieldSample f(derive_seed(7, rep), Window::m1_cone(2, 6), model);
    EXPECT_NEAR(last_passage(f, 6).value, exhaustive_last_passage(f, 6).value,
                1e-12);
  }
}

TEST(LastPassage, OracleRefusesOverCap) {
  const TableField f(Window::m1_cone(1, 13), 0.0);
  EXPECT_THROW(exhaustive_last_passage(f, 13), EnumerationCapError);
}

TEST(LastPassage, ConcatenationThroughMidSiteIsDominated) {
  const auto model = WeightModel::gaussian(0, 1);
  const int n = 10;
  for (std::uint64_t rep = 0; rep < 10; ++rep) {
    const FieldSample f(derive_seed(55, rep), Window::m1_cone(1, n), model);
    const double z = last_passage(f, n).value;
    for (int m : {-4, 0, 2}) {
      PathConstraint first;
      first.end_box = Box{Point{m}, Point{m}};
      PathConstraint second;
      second.starts = {Site(Point{m}, 4)};
      const double through = last_passage(f, 4, first).value +
                             last_passage(f, n - 4, second).value;
      EXPECT_LE(through, z + 1e-12);
    }
  }
}

TEST(LastPassage, MonotoneInEachWeight) {
  const auto model = WeightModel::gaussian(0, 1);
  const FieldSample base(3, Window::m1_cone(1, 6), model);
  const double z0 = last_passage(base, 6).value;
  for (const Edge& e : cone_edges(6, 1)) {
    TableField t(Window::m1_cone(1, 6));
    for (const Edge& g : cone_edges(6, 1)) t.set(g, base.weight(g));
    t.set(e, base.weight(e) + 0.7);
    EXPECT_GE(last_passage(t, 6).value, z0);
    t.set(e, base.weight(e) - 0.7);
    EXPECT_LE(last_passage(t, 6).value, z0);
  }
}

TEST(LastPassage, Errors) {
  const TableField f(Window::m1_cone(1, 3), 0.0);
  EXPECT_THROW(last_passage(f, 5), PassageError);
  EXPECT_THROW(last_passage(f, 0), PassageError);
  PathConstraint c;
  c.box = Box{Point{0}, Point{0}};
  EXPECT_THROW(last_passage(f, 2, c), PassageError);  // level 1 empty
  PathConstraint end;
  end.end_box = Box{Point{5}, Point{6}};
  EXPECT_THROW(last_passage(f, 2, end), PassageError);
}

TEST(LastPassage, JsonShape) {
  const TableField f(Window::m1_cone(1, 2), 1.0);
  const auto j = to_json(last_passage(f, 2));
  EXPECT_EQ(j["model"], "M1");
  EXPECT_EQ(j["value"], 2.0);
  EXPECT_EQ(j["path"].size(), 3u);
  EXPECT_EQ(j["path"][2], (nlohmann::json{-2, 2}));
}

TEST(MinimaxBlock, ConstantField) {
  const TableField f(Window::m1_cone(1, 12), -0.25);
  const Block b{Box{Point{-2}, Point{3}}, 4, 10};
  EXPECT_DOUBLE_EQ(minimax_block_value(f, b).value, -0.25 * 6);
}

TEST(MinimaxBlock, SingleStartReducesToConstrainedPassage) {
  const FieldSample f(9, Window::m1_cone(1, 10), WeightModel::gaussian(0, 1));
  // Box [0, 1] at even level 4 has the single entry site 0.
  const Block b{Box{Point{0}, Point{1}}, 4, 9};
  const auto mm = minimax_block_value(f, b);
  ASSERT_EQ(mm.per_start.size(), 1u);
  PathConstraint c;
  c.box = b.space;
  c.starts = {Site(Point{0}, 4)};
  EXPECT_EQ(mm.value, last_passage(f, 5, c).value);
}

TEST(MinimaxBlock, ThreeStartsAgainstBruteForce) {
  const FieldSample f(21, Window::m1_cone(1, 12),
                      WeightModel::discrete({-2, 1, 3}, {0.25, 0.5, 0.25}));
  const Block b{Box{Point{-2}, Point{3}}, 6, 10};  // entries -2, 0, 2
  const auto mm = minimax_block_value(f, b);
  ASSERT_EQ(mm.per_start.size(), 3u);
  double worst = kInf;
  for (int x0 : {-2, 0, 2}) {
    double best = -kInf;
    for (int mask = 0; mask < 16; ++mask) {
      Site s(Point{x0}, 6);
      double v = 0.0;
      bool inside = true;
      for (int t = 0; t < 4 && inside; ++t) {
        const Edge e = m1_edge(s, (mask >> t) & 1);
        inside = b.space.contains(e.head.x);
        if (inside) v += f.weight(e);
        s = e.head;
      }
      if (inside) best = std::max(best, v);
    }
    EXPECT_EQ(mm.per_start.at(Site(Point{x0}, 6)), best);
    worst = std::min(worst, best);
  }
  EXPECT_EQ(mm.value, worst);
  EXPECT_NEAR(path_value(f, mm.best_path.path), mm.value, 1e-12);
}

TEST(MinNegativePart, NonnegativeFieldCostsNothing) {
  const TableField f(Window::m1_cone(1, 8), 0.3);
  const auto costs = min_negative_part_paths(f, 0, 8, Box::cube(1, -3, 3));
  EXPECT_FALSE(costs.empty());
  for (const auto& [site, c] : costs) EXPECT_EQ(c, 0.0);
}

TEST(MinNegativePart, ForcedNegativeLayer) {
  TableField f(Window::m1_cone(1, 6), 1.0);
  f.set(origin_edge(0), -1.0);
  f.set(origin_edge(1), -1.0);
  for (const auto& [site, c] :
       min_negative_part_paths(f, 0, 6, Box::cube(1, -6, 6)))
    EXPECT_GE(c, 1.0);
}

TEST(MinNegativePart, MatchesEnumeration) {
  const int n = 8;
  const Box strip = Box::cube(1, -3, 3);
  for (std::uint64_t rep = 0; rep < 10; ++rep) {
    const FieldSample f(derive_seed(88, rep), Window::m1_cone(1, n),
                        WeightModel::gaussian(0, 1));
    std::map<Site, double> oracle;
    for (int mask = 0; mask < (1 << n); ++mask) {
      Site s(Point{0}, 0);
      double c = 0.0;
      bool inside = true;
      for (int t = 0; t < n && inside; ++t) {
        const Edge e = m1_edge(s, (mask >> t) & 1);
        inside = strip.contains(e.head.x);
        c += std::max(0.0, -f.weight(e));
        s = e.head;
      }
      if (!inside) continue;
      auto it = oracle.find(s);
      if (it == oracle.end()) oracle.emplace(s, c);
      else it->second = std::min(it->second, c);
    }
    const auto dp = min_negative_part_paths(f, 0, n, strip);
    ASSERT_EQ(dp.size(), oracle.size());
    for (const auto& [site, c] : oracle) EXPECT_NEAR(dp.at(site), c, 1e-12);
  }
}

// ---- Model 2 -------------------------------------------------------------

Window grid_window(int x_lo, int y_lo, int x_hi, int y_hi) {
  return Window::m2_box(Box{Point{x_lo, y_lo}, Point{x_hi, y_hi}});
}

TEST(FirstPassage, UnitWeights) {
  const TableField f(grid_window(-6, -6, 12, 6), 1.0);
  for (int n : {1, 4, 9}) {
    EXPECT_EQ(first_passage_point(f, n).value, n);
    EXPECT_EQ(first_passage_plane(f, n).value, n);
  }
}

TEST(FirstPassage, HandSetSquare) {
  // On the 2x2 grid the direct edge costs 10 and the detour 1 + 2 + 3.
  TableField f(grid_window(0, 0, 1, 1));
  f.set(m2_edge(Point{0, 0}, Point{1, 0}), 10);
  f.set(m2_edge(Point{0, 0}, Point{0, 1}), 1);
  f.set(m2_edge(Point{0, 1}, Point{1, 1}), 2);
  f.set(m2_edge(Point{1, 1}, Point{1, 0}), 3);
  const auto r = first_passage_point(f, 1);
  EXPECT_EQ(r.value, 6.0);
  ASSERT_EQ(r.path.size(), 4u);
  EXPECT_EQ(r.path[1].x, (Point{0, 1}));
  EXPECT_EQ(exhaustive_first_passage_point(f, 1, 8).value, 6.0);
}

TEST(FirstPassage, HandSetSlab) {
  // 3x3 slab x1 in [0, 2], x2 in [-1, 1]; cheap route enters at (0, 1).
  TableField f(grid_window(0, -1, 2, 1), 5.0);
  f.set(m2_edge(Point{0, 1}, Point{1, 1}), 0.5);
  f.set(m2_edge(Point{1, 1}, Point{1, 0}), 0.25);
  f.set(m2_edge(Point{1, 0}, Point{2, 0}), 1.0);
  const auto g = first_passage_plane(f, 2);
  EXPECT_EQ(g.value, 1.75);
  EXPECT_EQ(g.start.x, (Point{0, 1}));
  EXPECT_EQ(exhaustive_first_passage_plane(f, 2, 9).value, 1.75);
  EXPECT_LE(g.value, first_passage_point(f, 2).value);
}

TEST(FirstPassage, MatchesExhaustiveOnSmallGrids) {
  const auto model = WeightModel::discrete({0, 1, 2.5}, {0.2, 0.5, 0.3});
  const auto expo = WeightModel::tail_family(2, FSpec::constant(1), 1,
                                             TailSide::Upper);
  for (std::uint64_t rep = 0; rep < 40; ++rep) {
    const auto& m = rep % 2 ? model : expo;
    const FieldSample a(derive_seed(5, rep), grid_window(-1, -1, 2, 2), m);
    const auto pa = first_passage_point(a, 2);
    EXPECT_NEAR(pa.value, exhaustive_first_passage_point(a, 2, 15).value,
                1e-12);
    EXPECT_NEAR(path_value(a, pa.path), pa.value, 1e-12);

    const FieldSample b(derive_seed(6, rep), grid_window(0, -1, 3, 2), m);
    EXPECT_NEAR(first_passage_point(b, 3).value,
                exhaustive_first_passage_point(b, 3, 15).value, 1e-12);
    const auto gb = first_passage_plane(b, 3);
    EXPECT_NEAR(gb.value, exhaustive_first_passage_plane(b, 3, 15).value,
                1e-12);
    EXPECT_LE(gb.value, first_passage_point(b, 3).value);
  }
}

TEST(FirstPassage, SubadditiveUnderConcatenation) {
  const auto expo = WeightModel::tail_family(2, FSpec::constant(1), 1,
                                             TailSide::Upper);
  for (std::uint64_t rep = 0; rep < 20; ++rep) {
    const FieldSample f(derive_seed(17, rep), grid_window(-8, -10, 20, 10),
                        expo);
    for (auto [m, n] : {std::pair{3, 5}, std::pair{6, 6}}) {
      const double amn = first_passage_point(f, m + n).value;
      const double am = first_passage_point(f, m).value;
      const double shifted =
          first_passage_between(f, Point{m, 0}, Point{m + n, 0}).value;
      EXPECT_LE(amn, am + shifted + 1e-12);
    }
  }
}

TEST(FirstPassage, MonotoneInEachWeight) {
  const Window w = grid_window(-1, -2, 4, 2);
  const FieldSample base(8, w, WeightModel::discrete({1, 2}, {0.5, 0.5}));
  std::vector<Edge> edges;
  for (int x = -1; x <= 4; ++x)
    for (int y = -2; y <= 2; ++y) {
      if (x < 4) edges.push_back(m2_edge(Point{x, y}, Point{x + 1, y}));
      if (y < 2) edges.push_back(m2_edge(Point{x, y}, Point{x, y + 1}));
    }
  const double a0 = first_passage_point(base, 3).value;
  for (const Edge& e : edges) {
    TableField t(w);
    for (const Edge& g : edges) t.set(g, base.weight(g));
    t.set(e, base.weight(e) + 1.0);
    EXPECT_GE(first_passage_point(t, 3).value, a0);
  }
}

TEST(FirstPassage, RejectsNegativeWeightsAndSmallWindows) {
  TableField f(grid_window(0, 0, 2, 1), 1.0);
  f.set(m2_edge(Point{0, 0}, Point{1, 0}), -1.0);
  EXPECT_THROW(first_passage_point(f, 2), PassageError);
  const TableField g(grid_window(0, 0, 2, 1), 1.0);
  EXPECT_THROW(first_passage_point(g, 3), PassageError);
}

TEST(RestrictedPassage, UnitWeightsForceLength) {
  for (int N : {2, 3, 4, 5}) {
    const int L = 1 << N;
    const TableField f(grid_window(-1, -L, L + 1, L), 1.0);
    EXPECT_EQ(restricted_first_passage(f, N, 0.25).value, L);
  }
}

TEST(RestrictedPassage, PathsStayInClass) {
  const int N = 4, L = 16, w = 4;
  const auto model = WeightModel::discrete({0.5, 1, 4}, {0.3, 0.4, 0.3});
  for (std::uint64_t rep = 0; rep < 20; ++rep) {
    const FieldSample f(derive_seed(31, rep), grid_window(-4, -8, 20, 8),
                        model);
    const auto r = restricted_first_passage(f, N, 0.25);
    EXPECT_EQ(r.path.front().x, (Point{0, 0}));
    EXPECT_EQ(r.path.back().x, (Point{L, 0}));
    for (std::size_t i = 1; i < r.path.size(); ++i)
      EXPECT_TRUE(psi_step_ok(r.path[i - 1].x, r.path[i].x, L, w));
    EXPECT_NEAR(path_value(f, r.path), r.value, 1e-12);
    EXPECT_GE(r.value, first_passage_point(f, L).value);
    EXPECT_NEAR(r.value, bellman_ford_restricted_first_passage(f, N, 0.25),
                1e-12);
  }
}

TEST(RestrictedPassage, HandSetFieldAgainstOracles) {
  // N = 4, delta = 1/4: a cheap detour through the strip beats the axis.
  const int N = 4;
  TableField f(grid_window(0, -4, 16, 4), 1.0);
  for (int x = 5; x < 11; ++x) f.set(m2_edge(Point{x, 0}, Point{x + 1, 0}), 3);
  for (int x = 4; x < 12; ++x) f.set(m2_edge(Point{x, 2}, Point{x + 1, 2}), 0.1);
  const double v = restricted_first_passage(f, N, 0.25).value;
  EXPECT_NEAR(v, 8 + 8 * 0.1 + 4, 1e-12);
  EXPECT_NEAR(v, bellman_ford_restricted_first_passage(f, N, 0.25), 1e-12);
}

TEST(RestrictedPassage, TinyClassByFullEnumeration) {
  const auto model = WeightModel::discrete({0, 1, 3}, {0.3, 0.4, 0.3});
  for (std::uint64_t rep = 0; rep < 30; ++rep) {
    for (auto [N, delta] : {std::pair{2, 0.25}, std::pair{3, 0.125},
                            std::pair{3, 0.25}}) {
      const int L = 1 << N;
      const FieldSample f(derive_seed(3, rep), grid_window(0, -L, L, L),
                          model);
      const double v = restricted_first_passage(f, N, delta).value;
      EXPECT_NEAR(v, exhaustive_restricted_first_passage(f, N, delta), 1e-12);
      EXPECT_NEAR(v, bellman_ford_restricted_first_passage(f, N, delta),
                  1e-12);
    }
  }
}

TEST(RestrictedPassage, ClassMembership) {
  // L = 16, w = 4.
  EXPECT_TRUE(psi_vertex_ok(Point{3, 3}, 16, 4));
  EXPECT_FALSE(psi_vertex_ok(Point{3, -4}, 16, 4));
  EXPECT_TRUE(psi_vertex_ok(Point{4, -4}, 16, 4));
  EXPECT_FALSE(psi_vertex_ok(Point{8, 5}, 16, 4));
  EXPECT_TRUE(psi_vertex_ok(Point{12, 4}, 16, 4));
  EXPECT_FALSE(psi_vertex_ok(Point{13, 4}, 16, 4));
  EXPECT_FALSE(psi_vertex_ok(Point{17, 0}, 16, 4));
  EXPECT_FALSE(psi_step_ok(Point{2, 0}, Point{1, 0}, 16, 4));
  EXPECT_TRUE(psi_step_ok(Point{4, 0}, Point{3, 0}, 16, 4));
  EXPECT_FALSE(psi_step_ok(Point{12, 0}, Point{11, 0}, 16, 4));
  EXPECT_TRUE(psi_step_ok(Point{11, 0}, Point{12, 0}, 16, 4));
  const TableField f(grid_window(0, -4, 16, 4), 1.0);
  EXPECT_THROW(restricted_first_passage(f, 4, 0.3), PassageError);
  EXPECT_THROW(restricted_first_passage(f, 4, 1.0 / 32), PassageError);
  EXPECT_THROW(restricted_first_passage(f, 5, 0.25), PassageError);
}

}  // namespace
}  // namespace ldp
