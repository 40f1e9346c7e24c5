#include "ldp/constructions.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>

#include <gtest/gtest.h>

namespace ldp {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr int kWide = 1 << 20;

// Best value per endpoint over every directed d = 1 path of `steps` steps
// from s whose sites stay in [lo, hi].
std::map<int, double> brute_from(const EdgeField& f, const Site& s, int steps,
                                 int lo = -kWide, int hi = kWide) {
  std::map<int, double> best;
  std::function<void(const Site&, int, double)> go = [&](const Site& x,
                                                         int left, double v) {
    if (left == 0) {
      auto [it, fresh] = best.emplace(x.x[0], v);
      if (!fresh) it->second = std::max(it->second, v);
      return;
    }
    for (int dir = 0; dir < 2; ++dir) {
      const Edge e = m1_edge(x, dir);
      if (e.head.x[0] < lo || e.head.x[0] > hi) continue;
      go(e.head, left - 1, v + f.weight(e));
    }
  };
  go(s, steps, 0.0);
  return best;
}

double brute_max(const std::map<int, double>& m) {
  double b = -kInf;
  for (const auto& [x, v] : m) b = std::max(b, v);
  return b;
}

FieldSample gaussian_m1(std::uint64_t seed, int n, double mean = 0.0,
                        double sd = 1.0) {
  return FieldSample(seed, Window::m1_cone(1, n),
                     WeightModel::gaussian(mean, sd));
}

EventSpec spec(EventName name) {
  EventSpec s;
  s.name = name;
  return s;
}

// ---- catalog plumbing ----------------------------------------------------

TEST(EventCatalog, NamesRoundTrip) {
  EXPECT_EQ(all_events().size(), 19u);
  for (EventName e : all_events()) EXPECT_EQ(event_from_string(to_string(e)), e);
  EXPECT_THROW(event_from_string("Nope"), ConstructionError);
}

TEST(EventCatalog, ParameterStringRoundTrip) {
  const EventSpec s = parse_event_spec(
      "DyadicVector_Av",
      "N=8, delta=0.25, vvec=3;inf;0;5;2;1, M=0.5, f=power(2,0.5), mu=0.75, "
      "eps=0.2, eps_block=0.001");
  EXPECT_EQ(s.name, EventName::DyadicVector_Av);
  EXPECT_EQ(s.N, 8);
  EXPECT_EQ(s.v_vec, (std::vector<int>{3, kInfiniteBand, 0, 5, 2, 1}));
  EXPECT_EQ(s.f.family, FSpec::Family::Power);
  EXPECT_EQ(s.f.exponent, 0.5);
  EXPECT_EQ(*s.mu_hat, 0.75);
  EXPECT_EQ(*s.eps_block, 0.001);
  const EventSpec t =
      parse_event_spec("DyadicVector_Av", format_event_params(s));
  EXPECT_EQ(format_event_params(t), format_event_params(s));
  EXPECT_EQ(t.v_vec, s.v_vec);
  EXPECT_EQ(parse_event_spec("DyadicBand_Bkv", "v=inf").v, kInfiniteBand);
}

TEST(EventCatalog, ParameterErrors) {
  EXPECT_THROW(parse_event_spec("GoodBlock", "bogus=1"), ConstructionError);
  EXPECT_THROW(parse_event_spec("GoodBlock", "l=2.5"), ConstructionError);
  EXPECT_THROW(parse_event_spec("GoodBlock", "l"), ConstructionError);
  EXPECT_THROW(parse_event_spec("GoodBlock", "f=cubic(1)"), ConstructionError);
}

TEST(EventCatalog, MissingEstimateAndWindowErrors) {
  const auto f = gaussian_m1(1, 8);
  EventSpec s = spec(EventName::GoodBlock);
  s.l = 2;
  EXPECT_THROW(detect_event(f, s), ConstructionError);  // no mu
  s.mu_hat = 0.5;
  s.i = 10;  // block [20, 22] outside the window
  EXPECT_THROW(detect_event(f, s), ConstructionError);
  EventSpec h = spec(EventName::H_block);
  h.n = 16;
  h.mu_hat = 0.5;
  EXPECT_THROW(detect_event(f, h), ConstructionError);
}

// ---- blocks ----------------------------------------------------------------

TEST(GoodBlock, ConstantFieldAtMuIsGood) {
  const double mu = 0.7;
  const TableField f(Window::m1_cone(1, 12), mu);
  EventSpec s = spec(EventName::GoodBlock);
  s.l = 4;
  s.i = 0;
  s.r = 1;
  s.epsilon = 0.05;
  s.mu_hat = mu;
  const EventResult r = detect_event(f, s);
  EXPECT_TRUE(r.occurred);
  EXPECT_DOUBLE_EQ(r.achieved, 4 * mu);
  const auto& per = r.witness["per_start"];
  ASSERT_EQ(per.size(), 3u);  // level 4, x in {0, 2, 4}
  for (const auto& p : per) {
    EXPECT_DOUBLE_EQ(p["value"].get<double>(), 4 * mu);
    EXPECT_EQ(p["path"].size(), 5u);
    for (const auto& site : p["path"]) {
      EXPECT_GE(site[0].get<int>(), 0);
      EXPECT_LE(site[0].get<int>(), 4);
    }
  }
}

TEST(GoodBlock, AgreesWithExhaustivePathSearch) {
  int good = 0, bad = 0;
  for (std::uint64_t rep = 0; rep < 60; ++rep) {
    const int l = 2 + static_cast<int>(rep % 5);  // 2..6: at most 2^6 paths/start
    const int i = static_cast<int>(rep % 3) - 1;
    const int r = static_cast<int>(rep % 2);
    const auto f = gaussian_m1(derive_seed(77, rep), 2 * l + 2);
    EventSpec s = spec(EventName::GoodBlock);
    s.l = l;
    s.i = i;
    s.r = r;
    s.epsilon = 0.3;
    s.mu_hat = 0.4;
    const EventResult got = detect_event(f, s);

    double minimax = kInf;
    for (int x = l * i; x <= l * (i + 1); ++x) {
      if ((x + r * l) % 2 != 0) continue;
      const auto m = brute_from(f, Site(Point{x}, r * l), l, l * i, l * (i + 1));
      minimax = std::min(minimax, brute_max(m));
    }
    EXPECT_NEAR(got.achieved, minimax, 1e-12);
    const bool expect = minimax >= (0.4 - 0.3) * l;
    EXPECT_EQ(got.occurred, expect);
    (expect ? good : bad)++;
  }
  EXPECT_GT(good, 0);
  EXPECT_GT(bad, 0);
}

// ---- H, G, J, K ------------------------------------------------------------

TEST(HBlock, ThresholdAboveExhaustiveMaxFails) {
  // n = 8, delta = 1/2: level 4, box |x| <= 1 holds only x = 0; 4 steps.
  const auto f = gaussian_m1(5, 8);
  const double max4 = brute_max(brute_from(f, Site(Point{0}, 4), 4));
  EventSpec s = spec(EventName::H_block);
  s.n = 8;
  s.delta = 0.5;
  s.epsilon = 0.1;
  s.mu_hat = max4 / 4.0 + 0.01 + 0.01;  // threshold = max4 + 0.04
  EventResult r = detect_event(f, s);
  EXPECT_FALSE(r.occurred);
  EXPECT_NEAR(r.witness["best_path"]["value"].get<double>(), max4, 1e-12);
  EXPECT_EQ(r.witness["best_path"]["path"].size(), 5u);
  EXPECT_EQ(r.witness["size"].get<int>(), 0);

  s.mu_hat = max4 / 4.0 + 0.01 - 0.01;  // threshold = max4 - 0.04
  r = detect_event(f, s);
  EXPECT_TRUE(r.occurred);
  EXPECT_EQ(r.witness["size"].get<int>(), 1);
}

TEST(HBlock, MembershipMatchesBruteForce) {
  for (std::uint64_t rep = 0; rep < 15; ++rep) {
    // n = 16, delta = 1/2: level 8, x in {-2, 0, 2}, 8 free steps.
    const auto f = gaussian_m1(derive_seed(9, rep), 16);
    EventSpec s = spec(EventName::H_block);
    s.n = 16;
    s.delta = 0.5;
    s.epsilon = 0.5;
    s.mu_hat = 0.9;
    const double thr = (0.9 - 0.05) * 0.5 * 16;
    const EventResult r = detect_event(f, s);
    std::vector<int> expect;
    for (int x : {-2, 0, 2}) {
      if (brute_max(brute_from(f, Site(Point{x}, 8), 8)) >= thr)
        expect.push_back(x);
    }
    std::vector<int> got;
    for (const auto& m : r.witness["members"]) got.push_back(m[0].get<int>());
    EXPECT_EQ(got, expect);
    EXPECT_EQ(r.occurred, !expect.empty());

    EventSpec g = s;
    g.name = EventName::G_density;
    const EventResult rg = detect_event(f, g);
    EXPECT_DOUBLE_EQ(rg.achieved, expect.size() / 3.0);
    EXPECT_EQ(rg.occurred, expect.size() / 3.0 >= 0.9);
  }
}

TEST(JBlock, MembershipMatchesBruteForce) {
  for (std::uint64_t rep = 0; rep < 15; ++rep) {
    const auto f = gaussian_m1(derive_seed(10, rep), 16);
    EventSpec s = spec(EventName::J_block);
    s.n = 16;
    s.delta = 0.5;
    s.epsilon = 0.5;  // threshold -0.8
    const auto reach = brute_from(f, Site(Point{0}, 0), 8);
    std::vector<int> expect;
    for (int x : {-2, 0, 2})
      if (reach.at(x) >= -0.8) expect.push_back(x);
    const EventResult r = detect_event(f, s);
    std::vector<int> got;
    for (const auto& m : r.witness["members"]) got.push_back(m[0].get<int>());
    EXPECT_EQ(got, expect);
    const double best = std::max({reach.at(-2), reach.at(0), reach.at(2)});
    EXPECT_NEAR(r.witness["best_path"]["value"].get<double>(), best, 1e-12);

    EventSpec k = s;
    k.name = EventName::K_density;
    k.density = 0.6;
    const EventResult rk = detect_event(f, k);
    EXPECT_EQ(rk.occurred, expect.size() >= 2);
  }
}

// ---- endpoint events and FKG ----------------------------------------------

TEST(EndpointEvents, MatchBruteForce) {
  for (std::uint64_t rep = 0; rep < 20; ++rep) {
    const auto f = gaussian_m1(derive_seed(11, rep), 8);
    const auto ends = brute_from(f, Site(Point{0}, 0), 8);
    double right = -kInf, left = -kInf;
    for (const auto& [x, v] : ends) {
      if (x >= 0) right = std::max(right, v);
      if (x <= 0) left = std::max(left, v);
    }
    EventSpec s = spec(EventName::EndpointRight_A1);
    s.n = 8;
    s.mu_hat = 0.5;
    s.epsilon = 0.2;
    const auto a1 = detect_event(f, s);
    EXPECT_NEAR(a1.achieved, right, 1e-12);
    EXPECT_EQ(a1.occurred, right >= 0.4 * 8);
    s.name = EventName::EndpointLeft_A2;
    const auto a2 = detect_event(f, s);
    EXPECT_NEAR(a2.achieved, left, 1e-12);
  }
}

TEST(FkgInstance, ExhaustiveTwoPointFields) {
  // d = 1, n = 2: the 6 cone edges, each +1 or -1.
  const auto edges = cone_edges(2, 1);
  ASSERT_EQ(edges.size(), 6u);
  for (double p_plus : {0.5, 0.3, 0.8}) {
    for (double mu : {-0.5, 0.0, 0.5, 1.0, 1.5}) {
      double pa = 0.0, pb = 0.0, pab = 0.0;
      for (int mask = 0; mask < 64; ++mask) {
        TableField f(Window::m1_cone(1, 2));
        double prob = 1.0;
        for (int e = 0; e < 6; ++e) {
          const bool plus = (mask >> e) & 1;
          f.set(edges[static_cast<std::size_t>(e)], plus ? 1.0 : -1.0);
          prob *= plus ? p_plus : 1.0 - p_plus;
        }
        EventSpec s = spec(EventName::EndpointRight_A1);
        s.n = 2;
        s.mu_hat = mu;
        s.epsilon = 0.5;
        const bool a = detect_event(f, s).occurred;
        s.name = EventName::EndpointLeft_A2;
        const bool b = detect_event(f, s).occurred;
        pa += a ? prob : 0.0;
        pb += b ? prob : 0.0;
        pab += (a && b) ? prob : 0.0;
      }
      EXPECT_GE(pab, pa * pb - 1e-15) << "p+=" << p_plus << " mu=" << mu;
    }
  }
}

// ---- columns: F_k inside D_k ----------------------------------------------

TEST(Columns, ColumnTraverseMatchesBruteForce) {
  // n = 16, delta = 1/2, l = 2: R = 1 column, [-2, -1].
  for (std::uint64_t rep = 0; rep < 10; ++rep) {
    const auto f = gaussian_m1(derive_seed(12, rep), 16, 0.2);
    EventSpec s = spec(EventName::ColumnTraverse_Dk);
    s.n = 16;
    s.delta = 0.5;
    s.l = 2;
    s.k = 1;
    s.mu_hat = 0.5;
    s.epsilon = 1.0;
    const auto r = detect_event(f, s);
    double minimax = kInf;
    for (int x : {-2, -1}) {
      if ((x + 8) % 2 != 0) continue;
      minimax = std::min(minimax, brute_max(brute_from(f, Site(Point{x}, 8), 8, -2, -1)));
    }
    EXPECT_NEAR(r.achieved, minimax, 1e-12);
    EXPECT_EQ(r.occurred, minimax >= (0.5 - 0.2) * 0.5 * 16);
  }
}

TEST(Columns, ConcatenationImpliesTraverse) {
  // (1 - delta)(eps/10 - eps_g) >= c1 (mu - eps_g) makes F_k inside D_k.
  const double mu = 0.5, eps = 1.0, c1 = 0.05, delta = 0.5;
  ASSERT_GE((1 - delta) * (eps / 10 - eps / 100), c1 * (mu - eps / 100));
  int f_true = 0, d_false = 0;
  for (std::uint64_t rep = 0; rep < 90; ++rep) {
    const double mean = 0.1 + 0.1 * static_cast<double>(rep % 9);
    const auto f = gaussian_m1(derive_seed(13, rep), 64, mean, 0.3);
    const int l = rep % 2 ? 4 : 2;
    for (int k = 1; k <= 32 / (2 * l) - 1; ++k) {
      EventSpec s = spec(EventName::ColumnConcat_Fk);
      s.n = 64;
      s.delta = delta;
      s.l = l;
      s.k = k;
      s.c1 = c1;
      s.epsilon = eps;
      s.mu_hat = mu;
      const auto fk = detect_event(f, s);
      s.name = EventName::ColumnTraverse_Dk;
      const auto dk = detect_event(f, s);
      if (fk.occurred) {
        ++f_true;
        EXPECT_TRUE(dk.occurred) << "rep " << rep << " k " << k;
      }
      d_false += dk.occurred ? 0 : 1;
    }
  }
  EXPECT_GT(f_true, 20);
  EXPECT_GT(d_false, 0);
}

TEST(Columns, ConcatenationWitnessIsConsistent) {
  const auto f = gaussian_m1(14, 32, 0.4, 0.5);
  EventSpec s = spec(EventName::ColumnConcat_Fk);
  s.n = 32;
  s.delta = 0.5;
  s.l = 2;
  s.k = 2;
  s.c1 = 0.25;  // subset cap floor(0.25 * 32 / 2) = 4
  s.epsilon = 1.0;
  s.mu_hat = 0.5;
  const auto r = detect_event(f, s);
  const auto y = r.witness["minimax"].get<std::vector<double>>();
  ASSERT_EQ(y.size(), 8u);
  // Independent minimax per block: column [-2, -1], levels 16 + 2(j-1) .. +2.
  int good = 0;
  for (int j = 1; j <= 8; ++j) {
    const int lvl = 16 + 2 * (j - 1);
    double mm = kInf;
    for (int x : {-2, -1}) {
      if ((x + lvl) % 2 != 0) continue;
      mm = std::min(mm, brute_max(brute_from(f, Site(Point{x}, lvl), 2, -2, -1)));
    }
    EXPECT_NEAR(y[static_cast<std::size_t>(j - 1)], mm, 1e-12);
    if (mm >= (0.5 - 0.01) * 2) ++good;
  }
  EXPECT_EQ(r.witness["good_blocks"].get<int>(), good);
  std::vector<double> neg = y;
  std::sort(neg.begin(), neg.end());
  double low = 0.0;
  for (int q = 0; q < 4 && neg[static_cast<std::size_t>(q)] < 0; ++q)
    low += neg[static_cast<std::size_t>(q)];
  EXPECT_NEAR(r.witness["lowest_sum"].get<double>(), low, 1e-12);
}

TEST(Columns, GeometryErrors) {
  const auto f = gaussian_m1(1, 32);
  EventSpec s = spec(EventName::ColumnTraverse_Dk);
  s.n = 32;
  s.delta = 0.5;
  s.l = 2;
  s.mu_hat = 0.5;
  s.k = 0;
  EXPECT_THROW(detect_event(f, s), ConstructionError);
  s.k = 4;  // R = 16 / 4 - 1 = 3
  EXPECT_THROW(detect_event(f, s), ConstructionError);
  s.k = 1;
  s.l = 3;
  EXPECT_THROW(detect_event(f, s), ConstructionError);
}

// ---- upper cap -------------------------------------------------------------

TEST(UpperCap, ConstantFieldMeetsCap) {
  const TableField f(Window::m1_cone(1, 16), 0.75);
  EventSpec s = spec(EventName::UpperCap_UdeltaN);
  s.N = 4;
  s.delta = 0.25;
  s.epsilon = 0.0;
  s.mu_hat = 0.75;
  const auto r = detect_event(f, s);
  EXPECT_TRUE(r.occurred);
  EXPECT_DOUBLE_EQ(r.achieved, 0.75 * 12);
  EXPECT_DOUBLE_EQ(r.threshold, 0.75 * 0.75 * 16);
}

TEST(UpperCap, MatchesBruteForce) {
  for (std::uint64_t rep = 0; rep < 10; ++rep) {
    const auto f = gaussian_m1(derive_seed(15, rep), 8);
    double best = -kInf;
    for (int x = -2; x <= 2; x += 2)
      best = std::max(best, brute_max(brute_from(f, Site(Point{x}, 2), 6)));
    EventSpec s = spec(EventName::UpperCap_UdeltaN);
    s.N = 3;
    s.delta = 0.25;
    s.epsilon = 0.1;
    s.mu_hat = 0.6;
    const auto r = detect_event(f, s);
    EXPECT_NEAR(r.achieved, best, 1e-12);
    EXPECT_EQ(r.occurred, best <= 0.75 * 0.7 * 8);
  }
}

// ---- shell events ----------------------------------------------------------

TEST(ShellForcing, ConstructedFieldOccurs) {
  const int N = 6, k = 2;
  const double M = 1.5;
  const double thr = -M * std::ldexp(1.0, N - k) / N;
  TableField f(Window::m1_cone(1, 8), 0.0);
  const auto edges = shell_edges_m1(k, 1);
  for (const Edge& e : edges) f.set(e, thr - 1.0);
  EventSpec s = spec(EventName::ShellForcing_AkN);
  s.N = N;
  s.k = k;
  s.M = M;
  auto r = detect_event(f, s);
  EXPECT_TRUE(r.occurred);
  EXPECT_DOUBLE_EQ(r.threshold, thr);
  EXPECT_EQ(r.witness["edges"].get<std::size_t>(), edges.size());
  f.set(edges[5], thr + 1e-9);
  r = detect_event(f, s);
  EXPECT_FALSE(r.occurred);
  EXPECT_EQ(r.witness["violations"].get<int>(), 1);
  EXPECT_EQ(r.witness["max_edge"].get<EdgeId>(), edges[5].id);
  s.k = 4;  // k > N / 2
  EXPECT_THROW(detect_event(f, s), ConstructionError);
}

TEST(ShellProbability, ZeroForcingIsHalfPower) {
  for (int k = 0; k <= 3; ++k) {
    const auto p = shell_event_probability(6, k, 0.0);
    EXPECT_EQ(p.edges, static_cast<std::int64_t>(shell_edges_m1(k, 1).size()));
    EXPECT_NEAR(p.log_p, p.edges * std::log(0.5), 1e-12);
  }
  EXPECT_THROW(shell_event_probability(6, 4, 1.0), ConstructionError);
}

TEST(ShellProbability, ProductLawOverShells) {
  const int N = 8;
  const double M = 0.7;
  double sum_log = 0.0;
  for (int k = 0; 2 * k <= N; ++k) sum_log += shell_event_probability(N, k, M).log_p;
  // Intersection over the disjoint union of shells, edge by edge.
  double joint = 0.0;
  for (int k = 0; 2 * k <= N; ++k) {
    const double x = M * std::ldexp(1.0, N - k) / N;
    for (std::size_t e = 0; e < shell_edges_m1(k, 1).size(); ++e)
      joint += std::log(0.5 * std::erfc(x / std::sqrt(2.0)));
  }
  EXPECT_NEAR(sum_log, joint, 1e-9 * std::abs(joint));
}

TEST(ShellProbability, LogTailIsContinuousAndAccurate) {
  EXPECT_NEAR(log_normal_cdf_lower(0.0), std::log(0.5), 1e-15);
  EXPECT_NEAR(log_normal_cdf_lower(36.999999), log_normal_cdf_lower(37.0),
              1e-4);
  // Asymptotic branch against the Mills-ratio continued fraction at x = 50.
  const double x = 50.0;
  double cf = x;
  for (int q = 200; q >= 1; --q) cf = x + q / cf;
  const double expect = -0.5 * x * x - 0.5 * std::log(2 * M_PI) - std::log(cf);
  EXPECT_NEAR(log_normal_cdf_lower(x), expect, 1e-10);
}

TEST(ShellProbability, MatchesMonteCarlo) {
  // The event at N = 6, k = 1, M = 1 has probability near 1e-103, far
  // beyond sampling; the cross-check runs where hits are frequent.
  for (double M : {0.0, 0.05}) {
    const int N = 6, k = 0;
    const auto p = shell_event_probability(N, k, M);
    const auto model = WeightModel::gaussian(0, 1);
    EventSpec s = spec(EventName::ShellForcing_AkN);
    s.N = N;
    s.k = k;
    s.M = M;
    const int reps = 100000;
    int hits = 0;
    for (int rep = 0; rep < reps; ++rep) {
      const FieldSample f(derive_seed(2024, static_cast<std::uint64_t>(rep)),
                          Window::m1_cone(1, 2), model);
      hits += detect_event(f, s).occurred ? 1 : 0;
    }
    const double phat = static_cast<double>(hits) / reps;
    const double sigma = std::sqrt(p.p * (1 - p.p) / reps);
    EXPECT_LE(std::abs(phat - p.p), 3 * sigma) << "M=" << M;
  }
}

TEST(ShellBound, ConstructedFieldExamples) {
  auto b = verify_shell_bound(6, 4.0, 1.0, 0.0);
  EXPECT_TRUE(b.holds);
  EXPECT_LE(b.Z, -2.0 * 64);
  // Every path takes 2 steps in T_0 and 2^k steps in T_k, k = 1..3.
  EXPECT_NEAR(b.Z, -(4.0 * 64 / 6) * 5, 1e-9);
  EXPECT_DOUBLE_EQ(b.bound, -128.0 + 64.0);

  b = verify_shell_bound(4, 8.0, 2.0, 0.0);
  EXPECT_TRUE(b.holds);
  EXPECT_NEAR(b.Z, -(8.0 * 16 / 4) * 4, 1e-9);
  EXPECT_GE(b.bound - b.Z, (8.0 / 2 - 2 * 2.0) * 16);

  EXPECT_THROW(verify_shell_bound(6, 0.0, 0.0, 0.0), ConstructionError);
  EXPECT_THROW(verify_shell_bound(6, 3.0, 1.0, 0.0), ConstructionError);
}

TEST(ShellBound, ForcedFieldMatchesExhaustiveSearch) {
  const TableField f = shell_forced_field(3, 2.0);
  const auto ends = brute_from(f, Site(Point{0}, 0), 8);
  EXPECT_NEAR(verify_shell_bound(3, 2.0, 0.5, 0.0).Z, brute_max(ends), 1e-12);
}

// ---- dyadic bands and classification ---------------------------------------

// Field whose shell k carries negative mass exactly `mass` on one edge.
TableField single_mass_field(int level_hi, const std::map<int, double>& mass) {
  TableField f(Window::m1_cone(1, level_hi), 0.25);
  for (const auto& [k, m] : mass) f.set(shell_edges_m1(k, 1).front(), -m);
  return f;
}

TEST(DyadicBand, LowerEndpointBelongsToBand) {
  const int N = 8, k = 2;
  const TableField f = single_mass_field(8, {{k, std::ldexp(1.0, N - 3 + k)}});
  EventSpec s = spec(EventName::DyadicBand_Bkv);
  s.N = N;
  s.k = k;
  s.v = 3;
  EXPECT_TRUE(detect_event(f, s).occurred);
  s.v = 4;  // upper endpoint of band 4 is open
  EXPECT_FALSE(detect_event(f, s).occurred);
  EXPECT_EQ(dyadic_band(std::ldexp(1.0, N - 3), N), 3);
  EXPECT_EQ(dyadic_band(std::nextafter(std::ldexp(1.0, N - 3), 0.0), N), 4);
  EXPECT_EQ(dyadic_band(std::ldexp(1.0, N), N), 0);
  EXPECT_EQ(dyadic_band(0.0, N), kInfiniteBand);
}

TEST(DyadicBand, InfiniteBandMeansNoNegativeMass) {
  const TableField f(Window::m1_cone(1, 8), 1.0);
  EventSpec s = spec(EventName::DyadicBand_Bkv);
  s.N = 8;
  s.k = 1;
  s.v = kInfiniteBand;
  EXPECT_TRUE(detect_event(f, s).occurred);
}

TEST(DyadicBand, TruncationDropsSmallNegatives) {
  TableField f(Window::m1_cone(1, 8), -0.5);
  EventSpec s = spec(EventName::DyadicBand_Bkv);
  s.N = 6;
  s.k = 1;
  s.v = kInfiniteBand;
  s.M = 0.5;  // X^- 1{X^- > M}: nothing survives
  EXPECT_TRUE(detect_event(f, s).occurred);
  s.M = 0.0;  // |T_1| = 14 edges of mass 0.5, scaled 3.5 in [2, 4)
  s.v = 4;
  EXPECT_FALSE(detect_event(f, s).occurred);
  s.v = 5;
  EXPECT_TRUE(detect_event(f, s).occurred);
}

TEST(DyadicVector, IntersectionOfBands) {
  const int N = 6;  // delta = 1/4: k = 1..4
  const TableField f = single_mass_field(
      32, {{1, 2.0 * 32}, {2, 4.0 * 3}, {4, 16.0 * 0.75}});
  EventSpec s = spec(EventName::DyadicVector_Av);
  s.N = N;
  s.delta = 0.25;
  s.v_vec = {1, 5, kInfiniteBand, 7};
  // scaled values: 32 -> v=1, 3 -> v=5, 0 -> inf, 0.75 -> v=7
  EXPECT_TRUE(detect_event(f, s).occurred);
  s.v_vec[3] = 6;
  EXPECT_FALSE(detect_event(f, s).occurred);
  s.v_vec.pop_back();
  EXPECT_THROW(detect_event(f, s), ConstructionError);
}

TEST(Classification, AllPositiveFieldIsAllInfinite) {
  const TableField f(Window::m1_cone(1, 256), 0.5);
  const auto c = classify_dyadic(f, 8, 0.25);
  ASSERT_EQ(c.v.size(), 7u);
  for (int v : c.v) EXPECT_EQ(v, kInfiniteBand);
  EXPECT_EQ(c.inverse_sum(), 0.0);
}

TEST(Classification, ExactBandEndpoint) {
  const int N = 8, k = 1;
  // 2^{-k} V_k^- = 2^{N-3} = 32 >= 2^{k+3} = 16: selected with v = 3.
  const TableField f = single_mass_field(256, {{k, std::ldexp(1.0, N - 3 + k)}});
  const auto c = classify_dyadic(f, N, 0.25);
  EXPECT_TRUE(c.selected[k]);
  EXPECT_EQ(c.v[k], 3);
  EXPECT_FALSE(c.good[k]);  // 3 > (8 - 1)/2 - 2
  EXPECT_EQ(c.v[0], kInfiniteBand);
}

// Straightforward banding: scan v upward until the band contains s.
int scan_band(double s, int N) {
  if (s >= std::pow(2.0, N)) return 0;
  for (int v = 1; v < 2000; ++v) {
    if (std::pow(2.0, N - v) <= s && s < std::pow(2.0, N - v + 1)) return v;
  }
  return -1;
}

TEST(Classification, MatchesDualImplementation) {
  const int N = 8;
  for (std::uint64_t rep = 0; rep < 8; ++rep) {
    const double sd = 1.0 + 4.0 * static_cast<double>(rep);
    const FieldSample f(derive_seed(31, rep), Window::m1_cone(1, 256),
                        WeightModel::gaussian(0, sd));
    const auto c = classify_dyadic(f, N, 0.25);
    ASSERT_EQ(c.v.size(), 7u);
    for (int k = 0; k <= 6; ++k) {
      double mass = 0.0;
      for (const Edge& e : shell_edges_m1(k, 1))
        mass += std::max(0.0, -f.weight(e));
      const double s = mass / std::pow(2.0, k);
      EXPECT_NEAR(c.scaled[static_cast<std::size_t>(k)], s, 1e-9 * (1 + s));
      const bool sel = s >= std::pow(2.0, k + 3);
      EXPECT_EQ(c.selected[static_cast<std::size_t>(k)], sel);
      const int v = sel ? scan_band(s, N) : kInfiniteBand;
      EXPECT_EQ(c.v[static_cast<std::size_t>(k)], v);
      EXPECT_EQ(c.good[static_cast<std::size_t>(k)],
                v != kInfiniteBand && v <= (N - k) / 2.0 - 2);
    }
  }
}

void expect_chains(const DyadicClassification& c, double eps) {
  const auto a = check_excluded_mass(c);
  EXPECT_TRUE(a.holds) << a.lhs << " > " << a.rhs;
  const auto b = check_inverse_sum(c, eps);
  EXPECT_TRUE(b.holds) << b.lhs << " < " << b.rhs;
  // Selected shells land in the set with 2^{-v_k} >= 2^{k-N+3}.
  for (int k = 0; k <= c.k_max(); ++k) {
    if (!c.selected[static_cast<std::size_t>(k)]) continue;
    EXPECT_GE(std::ldexp(1.0, -c.v[static_cast<std::size_t>(k)]),
              std::ldexp(1.0, k - c.N + 3));
  }
}

TEST(Classification, ChainsOnAdversarialScaledVectors) {
  const int N = 12;
  const double delta = std::ldexp(1.0, -8);  // K = 4
  const double eps = 0.6;                    // 2^7 delta = 1/2 < eps
  int premised = 0;
  std::vector<std::vector<double>> cases;
  // Just below every selection threshold: all excluded.
  std::vector<double> below;
  for (int k = 0; k <= 4; ++k)
    below.push_back(std::nextafter(std::ldexp(1.0, k + 3), 0.0));
  cases.push_back(below);
  // Selected shells just below an upper band edge (smallest 2^{-v}).
  for (int top = 4; top <= 12; ++top) {
    std::vector<double> v = below;
    for (int k = 0; k <= 4; ++k)
      v[static_cast<std::size_t>(k)] =
          std::max(v[static_cast<std::size_t>(k)],
                   std::nextafter(std::ldexp(1.0, top), 0.0));
    cases.push_back(v);
  }
  // Mass concentrated on one shell at exactly eps 2^N.
  for (int k = 0; k <= 4; ++k) {
    std::vector<double> v(5, 0.0);
    v[static_cast<std::size_t>(k)] = eps * std::ldexp(1.0, N);
    cases.push_back(v);
  }
  // Mass split evenly at the premise boundary.
  cases.push_back(std::vector<double>(5, eps * std::ldexp(1.0, N) / 5));
  cases.push_back(std::vector<double>(5, std::ldexp(1.0, N + 3)));
  for (const auto& v : cases) {
    const auto c = classify_scaled(v, N, delta);
    expect_chains(c, eps);
    premised += check_inverse_sum(c, eps).premise ? 1 : 0;
  }
  EXPECT_GE(premised, 8);
}

TEST(Classification, ChainsOnRandomFieldsByRejection) {
  const int N = 10;
  const double delta = std::ldexp(1.0, -8);  // K = 2
  const double eps = 0.55;
  int accepted = 0;
  for (std::uint64_t rep = 0; rep < 400 && accepted < 40; ++rep) {
    const double sd = 40.0 + static_cast<double>(rep % 20) * 10.0;
    const FieldSample f(derive_seed(41, rep), Window::m1_cone(1, 8),
                        WeightModel::gaussian(0, sd));
    const auto c = classify_dyadic(f, N, delta);
    expect_chains(c, eps);
    if (check_inverse_sum(c, eps).premise) ++accepted;
  }
  EXPECT_GE(accepted, 40);
}

// ---- forcing schedule ------------------------------------------------------

TEST(ForcingSchedule, ConstantFamilyIsUniform) {
  const auto s = forcing_schedule(0.1, 0.25, 8, FSpec::constant(3.0), 0.1);
  ASSERT_EQ(s.eps.size(), 7u);  // j = 2..8
  for (double e : s.eps) EXPECT_NEAR(e, 100 * 0.1 / 7, 1e-12);
  EXPECT_EQ(s.j_lo, 2);
}

TEST(ForcingSchedule, Normalization) {
  for (const FSpec& f : {FSpec::power(1.0, 0.5), FSpec::power(2.0, 1.0),
                         FSpec::log_power(1.0, 2.0)}) {
    const auto s = forcing_schedule(0.1, 0.25, 8, f, 0.1);
    EXPECT_NEAR(s.total(), 10.0, 1e-9);
    double norm = 0.0;
    for (int j = 2; j <= 8; ++j) norm += 1.0 / f(std::pow(2.0, j));
    for (int j = 2; j <= 8; ++j)
      EXPECT_NEAR(s.eps_at(j), 10.0 / (f(std::pow(2.0, j)) * norm), 1e-12);
  }
}

TEST(ForcingSchedule, MassOutsideJIsSmall) {
  const double delta = std::ldexp(1.0, -6), eps = 0.1, m0 = 1.0;
  for (int N = 6; N <= 30; N += 3) {
    for (const FSpec& f : {FSpec::constant(1.0), FSpec::power(1.0, 0.5),
                           FSpec::power(1.0, 2.0), FSpec::log_power(1.0, 3.0)}) {
      const auto s = forcing_schedule(eps, delta, N, f, m0);
      double mass = 0.0;
      for (int j = s.j_lo; j <= N; ++j)
        if (std::pow(2.0, j) * s.eps_at(j) >= m0) mass += s.eps_at(j);
      EXPECT_NEAR(s.mass_in_J(), mass, 1e-12);
      EXPECT_GT(s.mass_in_J(), 9.9) << "N=" << N << " " << f.describe();
    }
  }
}

TEST(ForcingSchedule, Preconditions) {
  EXPECT_THROW(forcing_schedule(0.1, 0.25, 8, FSpec::constant(1), 0.2),
               ConstructionError);  // 2 delta M0 = 0.1
  EXPECT_THROW(forcing_schedule(0.1, 0.3, 8, FSpec::constant(1), 0.01),
               ConstructionError);
  EXPECT_THROW(forcing_schedule(0.1, 0.25, 1, FSpec::constant(1), 0.01),
               ConstructionError);
}

TEST(ForcingSet, DetectorUsesScheduleShells) {
  const int N = 6;
  const double delta = 0.25, eps = 0.05, m0 = 0.05;
  const auto sched = forcing_schedule(eps, delta, N, FSpec::constant(1), m0);
  ASSERT_FALSE(sched.J.empty());
  TableField f(Window::m1_cone(1, 32), 0.0);
  for (int j : sched.J)
    for (const Edge& e : shell_edges_m1(N - j, 1, 32))
      f.set(e, -std::ldexp(sched.eps_at(j), j));
  EventSpec s = spec(EventName::ForcingSet_VJN);
  s.N = N;
  s.delta = delta;
  s.epsilon = eps;
  s.m0 = m0;
  EXPECT_TRUE(detect_event(f, s).occurred);
  const int j = sched.J.front();
  f.set(shell_edges_m1(N - j, 1).back(), 0.0);
  EXPECT_FALSE(detect_event(f, s).occurred);
}

// ---- random greedy paths ---------------------------------------------------

TEST(GreedyPath, ReachesTargetAndBreaksTiesLeft) {
  const auto p = greedy_path(Site(Point{0}, 4), Site(Point{2}, 10));
  ASSERT_EQ(p.size(), 7u);
  std::vector<int> xs;
  for (const Site& s : p) xs.push_back(s.x[0]);
  EXPECT_EQ(xs, (std::vector<int>{0, 1, 2, 1, 2, 1, 2}));
  EXPECT_THROW(greedy_path(Site(Point{0}, 4), Site(Point{1}, 10)),
               ConstructionError);
}

TEST(GreedyPath, EdgeHitsMatchDirectCountAndScaleLikeInverseLevel) {
  for (int k = 1; k <= 7; ++k) {
    const auto prof = greedy_edge_hits(k);
    // Direct count with the rule written out for d = 1.
    const int a = 1 << k, b = 1 << (k + 1);
    std::map<std::pair<int, int>, std::int64_t> hits;  // (level, x) -> right?
    std::int64_t pairs = 0;
    for (int x = -a / 4; x <= a / 4; ++x) {
      if ((x + a) % 2) continue;
      for (int y = -b / 4; y <= b / 4; ++y) {
        if ((y + b) % 2) continue;
        ++pairs;
        int cur = x;
        for (int lvl = a; lvl < b; ++lvl) {
          const int next = cur < y ? cur + 1 : cur - 1;
          ++hits[{lvl * 4 + (next > cur ? 1 : 0), cur}];
          cur = next;
        }
        EXPECT_EQ(cur, y);
      }
    }
    std::int64_t top = 0;
    for (const auto& [key, c] : hits) top = std::max(top, c);
    EXPECT_EQ(prof.pairs, pairs);
    EXPECT_DOUBLE_EQ(prof.max_hit, static_cast<double>(top) / pairs);
    EXPECT_LT(prof.scaled(), 4.0) << "k=" << k;
  }
}

// ---- Model 2 ---------------------------------------------------------------

FieldSample uniform_m2(std::uint64_t seed, const Box& b) {
  return FieldSample(seed, Window::m2_box(b),
                     WeightModel::discrete({0.5, 1.0, 2.0}, {0.3, 0.4, 0.3}));
}

// All-pairs shortest paths by Floyd-Warshall over a box.
std::map<std::pair<Point, Point>, double> floyd(const EdgeField& f, const Box& b) {
  std::vector<Point> pts;
  for (int x = b.lo[0]; x <= b.hi[0]; ++x)
    for (int y = b.lo[1]; y <= b.hi[1]; ++y) pts.push_back(Point{x, y});
  const std::size_t n = pts.size();
  std::vector<double> d(n * n, kInf);
  for (std::size_t i = 0; i < n; ++i) {
    d[i * n + i] = 0;
    for (std::size_t j = 0; j < n; ++j) {
      int l1 = std::abs(pts[i][0] - pts[j][0]) + std::abs(pts[i][1] - pts[j][1]);
      if (l1 == 1) d[i * n + j] = f.weight(m2_edge(pts[i], pts[j]));
    }
  }
  for (std::size_t m = 0; m < n; ++m)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        d[i * n + j] = std::min(d[i * n + j], d[i * n + m] + d[m * n + j]);
  std::map<std::pair<Point, Point>, double> out;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) out[{pts[i], pts[j]}] = d[i * n + j];
  return out;
}

TEST(GoodChannel, MatchesFloydWarshall) {
  // n = 8, delta = 1/4: faces x1 = 2 and 6, lateral [-2, 2], l = 2.
  const Box win{Point{-1, -3}, Point{9, 3}};
  for (std::uint64_t rep = 0; rep < 6; ++rep) {
    const auto f = uniform_m2(derive_seed(51, rep), win);
    EventSpec s = spec(EventName::GoodChannel);
    s.n = 8;
    s.delta = 0.25;
    s.l = 2;
    s.nu_hat = 1.2;
    s.epsilon = 0.5;
    const double thr = (1.2 + 0.1) * 0.5 * 8;
    int good = 0;
    for (int k = 0; k <= 1; ++k) {
      s.k = k;
      const int lo = -2 + 2 * k, hi = lo + 2;
      const auto d = floyd(f, Box{Point{-1, lo}, Point{9, hi}});
      double worst = 0;
      for (int a = lo; a <= hi; ++a)
        for (int b = lo; b <= hi; ++b)
          worst = std::max(worst, d.at({Point{2, a}, Point{6, b}}));
      const auto r = detect_event(f, s);
      EXPECT_NEAR(r.achieved, worst, 1e-12);
      EXPECT_EQ(r.occurred, worst <= thr);
      good += r.occurred ? 1 : 0;
    }
    EventSpec c = s;
    c.name = EventName::ChannelDensity;
    const auto rc = detect_event(f, c);
    EXPECT_DOUBLE_EQ(rc.achieved, good / 2.0);
  }
}

TEST(GoodChannel, NeedsNuAndWindow) {
  const auto f = uniform_m2(1, Box{Point{-1, -1}, Point{9, 1}});
  EventSpec s = spec(EventName::GoodChannel);
  s.n = 8;
  s.delta = 0.25;
  s.l = 2;
  EXPECT_THROW(detect_event(f, s), ConstructionError);
  s.nu_hat = 1.0;
  EXPECT_THROW(detect_event(f, s), ConstructionError);  // lateral [-2, 0]
}

TEST(LowerCapM2, UnitWeightsAndPointToPointCheck) {
  const Box win{Point{-3, -4}, Point{10, 4}};
  const TableField unit(Window::m2_box(win), 1.0);
  EventSpec s = spec(EventName::LowerCapM2_UdeltaN);
  s.N = 3;
  s.delta = 0.25;  // square [-2, 2]^2, target (8, 0)
  s.nu_hat = 1.0;
  s.epsilon = 0.0;
  auto r = detect_event(unit, s);
  EXPECT_DOUBLE_EQ(r.achieved, 6.0);  // from (2, 0)
  EXPECT_TRUE(r.occurred);            // threshold (3/4) 8 = 6

  const auto f = uniform_m2(61, win);
  double best = kInf;
  for (int a = -2; a <= 2; ++a)
    for (int b = -2; b <= 2; ++b)
      if (std::abs(a) == 2 || std::abs(b) == 2)
        best = std::min(best, first_passage_between(f, Point{a, b}, Point{8, 0}).value);
  r = detect_event(f, s);
  EXPECT_NEAR(r.achieved, best, 1e-12);
}

TEST(DyadicBandM2, UnitWeightsCountEdges) {
  const Box win{Point{-2, -2}, Point{18, 2}};
  const TableField unit(Window::m2_box(win), 1.0);
  const auto edges = shell_edges_m2(2, 4, Window::m2_box(win));
  EventSpec s = spec(EventName::DyadicBandM2_Bkv);
  s.N = 4;
  s.k = 2;
  s.v = dyadic_band(edges.size() / 4.0, 4);
  const auto r = detect_event(unit, s);
  EXPECT_TRUE(r.occurred);
  EXPECT_DOUBLE_EQ(r.achieved, edges.size() / 4.0);
}

TEST(ForcingSetM2, L1LevelsAreForced) {
  const int N = 4;
  const double delta = 0.25, eps = 0.05, m0 = 0.05;
  const auto sched = forcing_schedule(eps, delta, N, FSpec::constant(1), m0);
  const Box win = Box::cube(2, -9, 9);
  TableField f(Window::m2_box(win), 100.0);
  EventSpec s = spec(EventName::ForcingSetM2_WJN);
  s.N = N;
  s.delta = delta;
  s.epsilon = eps;
  s.m0 = m0;
  EXPECT_TRUE(detect_event(f, s).occurred);
  // Edge {(1,0),(2,0)} has min l1 norm 1: level 0, i.e. j = N.
  ASSERT_NE(std::find(sched.J.begin(), sched.J.end(), N), sched.J.end());
  f.set(m2_edge(Point{1, 0}, Point{2, 0}), 0.0);
  EXPECT_FALSE(detect_event(f, s).occurred);
  f.set(m2_edge(Point{1, 0}, Point{2, 0}), 100.0);
  f.set(m2_edge(Point{0, 0}, Point{1, 0}), 0.0);  // norm 0: no level
  EXPECT_TRUE(detect_event(f, s).occurred);
}

}  // namespace
}  // namespace ldp
