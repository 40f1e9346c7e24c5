#include "ldp/constructions.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

namespace ldp {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

const std::vector<std::pair<EventName, std::string>>& event_names() {
  static const std::vector<std::pair<EventName, std::string>> names = {
      {EventName::H_block, "H_block"},
      {EventName::G_density, "G_density"},
      {EventName::J_block, "J_block"},
      {EventName::K_density, "K_density"},
      {EventName::GoodBlock, "GoodBlock"},
      {EventName::GoodChannel, "GoodChannel"},
      {EventName::ChannelDensity, "ChannelDensity"},
      {EventName::ShellForcing_AkN, "ShellForcing_AkN"},
      {EventName::DyadicBand_Bkv, "DyadicBand_Bkv"},
      {EventName::DyadicVector_Av, "DyadicVector_Av"},
      {EventName::ForcingSet_VJN, "ForcingSet_VJN"},
      {EventName::UpperCap_UdeltaN, "UpperCap_UdeltaN"},
      {EventName::EndpointRight_A1, "EndpointRight_A1"},
      {EventName::EndpointLeft_A2, "EndpointLeft_A2"},
      {EventName::ColumnConcat_Fk, "ColumnConcat_Fk"},
      {EventName::ColumnTraverse_Dk, "ColumnTraverse_Dk"},
      {EventName::DyadicBandM2_Bkv, "DyadicBandM2_Bkv"},
      {EventName::ForcingSetM2_WJN, "ForcingSetM2_WJN"},
      {EventName::LowerCapM2_UdeltaN, "LowerCapM2_UdeltaN"},
  };
  return names;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

nlohmann::json site_json(const Site& s, Model model = Model::M1) {
  nlohmann::json a = nlohmann::json::array();
  for (int i = 0; i < s.x.d; ++i) a.push_back(s.x[i]);
  if (model == Model::M1) a.push_back(s.n);
  return a;
}

nlohmann::json point_json(const Point& p) {
  return site_json(Site(p, 0), Model::M2);
}

nlohmann::json band_json(int v) {
  if (v == kInfiniteBand) return "inf";
  return v;
}

double need_mu(const EventSpec& s) {
  if (!s.mu_hat)
    throw ConstructionError(to_string(s.name) + " needs a mu estimate (mu=)");
  return *s.mu_hat;
}

double need_nu(const EventSpec& s) {
  if (!s.nu_hat)
    throw ConstructionError(to_string(s.name) + " needs a nu estimate (nu=)");
  return *s.nu_hat;
}

void require_model(const EdgeField& f, Model m, const EventSpec& s) {
  if (f.model() != m)
    throw ConstructionError(to_string(s.name) + " needs a " + to_string(m) +
                            " field");
}

void require_d(const EdgeField& f, int d, const EventSpec& s) {
  if (f.d() != d)
    throw ConstructionError(to_string(s.name) + " is defined for d = " +
                            std::to_string(d));
}

// Model 1: window must hold levels up to `top` and |x_i| <= hw.
void require_m1_region(const EdgeField& f, int top, int hw) {
  const Window& w = f.window();
  const Box need = Box::cube(f.d(), -hw, hw);
  if (w.level_lo > 0 || w.level_hi < top || !w.box.contains(need.lo) ||
      !w.box.contains(need.hi))
    throw ConstructionError("event region (levels 0.." + std::to_string(top) +
                            ", |x| <= " + std::to_string(hw) +
                            ") outside the field window");
}

void require_m1_block(const EdgeField& f, const Block& b) {
  const Window& w = f.window();
  if (b.level_lo < w.level_lo || b.level_hi > w.level_hi ||
      !w.box.contains(b.space.lo) || !w.box.contains(b.space.hi))
    throw ConstructionError("block outside the field window");
}

void require_m2_box(const EdgeField& f, const Box& b) {
  const Box& w = f.window().box;
  if (!w.contains(b.lo) || !w.contains(b.hi))
    throw ConstructionError("event region [" + to_string(b.lo) + "," +
                            to_string(b.hi) + "] outside the field window");
}

int checked_int(double x, const std::string& what) {
  const double r = std::round(x);
  if (std::abs(x - r) > 1e-9)
    throw ConstructionError(what + " must be an integer, got " + fmt(x));
  return static_cast<int>(r);
}

Box interval(int lo, int hi) { return Box{Point{lo}, Point{hi}}; }

// Parity-valid sites of level m with x in [lo, hi] (d = 1).
std::vector<Site> interval_sites(int m, int lo, int hi) {
  return block_sites(Block{interval(lo, hi), m, m});
}

// Shapes shared by H and J: level [delta n] and the box |x| <= delta n / 4.
struct MiddleLevel {
  int m = 0;
  int a = 0;
  std::vector<Site> sites;
};

MiddleLevel middle_level(const EventSpec& s) {
  if (s.n < 2) throw ConstructionError("horizon n must be >= 2");
  if (!(s.delta > 0.0 && s.delta < 1.0))
    throw ConstructionError("delta must lie in (0, 1)");
  MiddleLevel ml;
  ml.m = static_cast<int>(std::floor(s.delta * s.n));
  ml.a = static_cast<int>(std::floor(s.delta * s.n / 4.0));
  if (ml.m < 1 || ml.m >= s.n)
    throw ConstructionError("delta * n must lie in [1, n)");
  ml.sites = interval_sites(ml.m, -ml.a, ml.a);
  if (ml.sites.empty())
    throw ConstructionError("no parity site with |x| <= delta n / 4");
  return ml;
}

// H_{delta n, n}: sites of the middle box with a path to level n of value at
// least (mu - eps/10)(1 - delta) n.
EventResult detect_h(const EdgeField& field, const EventSpec& s, bool density) {
  require_model(field, Model::M1, s);
  require_d(field, 1, s);
  const double mu = need_mu(s);
  require_m1_region(field, s.n, s.n);
  const MiddleLevel ml = middle_level(s);
  const int steps = s.n - ml.m;
  const double thr = (mu - s.epsilon / 10.0) * (1.0 - s.delta) * s.n;

  const int reach = ml.a + steps;
  const MinimaxResult mm = minimax_block_value(
      field, Block{interval(-reach, reach), ml.m, s.n});
  PathConstraint pc;
  pc.starts = ml.sites;
  const PassageResult best = last_passage(field, steps, pc);

  nlohmann::json members = nlohmann::json::array();
  std::size_t count = 0;
  for (const Site& x : ml.sites) {
    if (mm.per_start.at(x) >= thr) {
      ++count;
      members.push_back(site_json(x));
    }
  }
  EventResult r;
  const double frac =
      static_cast<double>(count) / static_cast<double>(ml.sites.size());
  r.occurred = density ? frac >= s.density : count > 0;
  r.achieved = density ? frac : best.value;
  r.threshold = density ? s.density : thr;
  r.witness = {{"level", ml.m},
               {"box", {-ml.a, ml.a}},
               {"value_threshold", thr},
               {"mu_hat", mu},
               {"members", members},
               {"size", count},
               {"candidates", ml.sites.size()},
               {"fraction", frac},
               {"best_path", to_json(best)}};
  return r;
}

// J_{0, delta n}: middle-box sites reachable from the origin by a path of
// value at least -eps n / 10.
EventResult detect_j(const EdgeField& field, const EventSpec& s, bool density) {
  require_model(field, Model::M1, s);
  require_d(field, 1, s);
  const MiddleLevel ml = middle_level(s);
  require_m1_region(field, ml.m, ml.m);
  const double thr = -s.epsilon * s.n / 10.0;
  const auto values = last_passage_to_sites(field, ml.m);
  PathConstraint pc;
  pc.end_box = interval(-ml.a, ml.a);
  const PassageResult best = last_passage(field, ml.m, pc);

  nlohmann::json members = nlohmann::json::array();
  std::size_t count = 0;
  for (const Site& x : ml.sites) {
    if (values.at(x) >= thr) {
      ++count;
      members.push_back(site_json(x));
    }
  }
  EventResult r;
  const double frac =
      static_cast<double>(count) / static_cast<double>(ml.sites.size());
  r.occurred = density ? frac >= s.density : count > 0;
  r.achieved = density ? frac : best.value;
  r.threshold = density ? s.density : thr;
  r.witness = {{"level", ml.m},
               {"box", {-ml.a, ml.a}},
               {"value_threshold", thr},
               {"members", members},
               {"size", count},
               {"candidates", ml.sites.size()},
               {"fraction", frac},
               {"best_path", to_json(best)}};
  return r;
}

// Per-start confined best paths of a block, as witness entries.
nlohmann::json per_start_paths(const EdgeField& field, const Block& b,
                               const MinimaxResult& mm) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& [x, v] : mm.per_start) {
    PathConstraint pc;
    pc.box = b.space;
    pc.starts = {x};
    const PassageResult p = last_passage(field, b.level_hi - b.level_lo, pc);
    out.push_back({{"start", site_json(x)}, {"value", v},
                   {"path", to_json(p)["path"]}});
  }
  return out;
}

EventResult detect_good_block(const EdgeField& field, const EventSpec& s) {
  require_model(field, Model::M1, s);
  require_d(field, 1, s);
  const double mu = need_mu(s);
  if (s.l < 1) throw ConstructionError("block width l must be >= 1");
  if (s.r < 0) throw ConstructionError("block level index r must be >= 0");
  const Block b{interval(s.l * s.i, s.l * (s.i + 1)), s.r * s.l,
                (s.r + 1) * s.l};
  require_m1_block(field, b);
  const MinimaxResult mm = minimax_block_value(field, b);
  const double thr = (mu - s.epsilon) * s.l;
  EventResult r;
  r.occurred = mm.value >= thr;
  r.achieved = mm.value;
  r.threshold = thr;
  r.witness = {{"block", {{"space", {b.space.lo[0], b.space.hi[0]}},
                          {"levels", {b.level_lo, b.level_hi}}}},
               {"mu_hat", mu},
               {"minimax", mm.value},
               {"argmin", site_json(mm.argmin)},
               {"per_start", per_start_paths(field, b, mm)}};
  return r;
}

// ---- Model 1: columns ----------------------------------------------------

struct Column {
  int m = 0;       // delta n
  int blocks = 0;  // (1 - delta) n / l
  Box space;
};

Column column(const EventSpec& s) {
  if (s.n < 2) throw ConstructionError("horizon n must be >= 2");
  if (s.l < 2) throw ConstructionError("column width l must be >= 2");
  Column c;
  c.m = checked_int(s.delta * s.n, "delta * n");
  if (c.m < 1 || c.m >= s.n) throw ConstructionError("delta * n must lie in [1, n)");
  if (c.m % 4 != 0) throw ConstructionError("delta * n must be a multiple of 4");
  if (c.m % (2 * s.l) != 0)
    throw ConstructionError("delta * n must be a multiple of 2 l");
  if ((s.n - c.m) % s.l != 0)
    throw ConstructionError("(1 - delta) n must be a multiple of l");
  const int R = c.m / (2 * s.l) - 1;
  if (s.k < 1 || s.k > R)
    throw ConstructionError("column index k must lie in [1, " +
                            std::to_string(R) + "]");
  c.blocks = (s.n - c.m) / s.l;
  const int lo = -c.m / 4 + (s.k - 1) * s.l;
  c.space = interval(lo, lo + s.l - 1);
  return c;
}

EventResult detect_column_concat(const EdgeField& field, const EventSpec& s) {
  require_model(field, Model::M1, s);
  require_d(field, 1, s);
  const double mu = need_mu(s);
  const Column c = column(s);
  require_m1_region(field, s.n, s.n);
  const double eps_g = s.eps_block ? *s.eps_block : s.epsilon / 100.0;
  const double good_thr = (mu - eps_g) * s.l;

  std::vector<double> y;
  int good = 0;
  for (int j = 1; j <= c.blocks; ++j) {
    const Block b{c.space, c.m + (j - 1) * s.l, c.m + j * s.l};
    y.push_back(minimax_block_value(field, b).value);
    if (y.back() >= good_thr) ++good;
  }
  const double count_thr = ((1.0 - s.delta) - s.c1) * s.n / s.l;
  const bool count_ok = good >= count_thr;

  // A(c1, n, l, k): the |J| <= c1 n / l most negative minimax values.
  const auto cap = static_cast<std::size_t>(std::floor(s.c1 * s.n / s.l));
  std::vector<double> sorted = y;
  std::sort(sorted.begin(), sorted.end());
  double low_sum = 0.0;
  for (std::size_t q = 0; q < std::min(cap, sorted.size()) && sorted[q] < 0.0; ++q)
    low_sum += sorted[q];
  const double a_thr = -(s.epsilon / 10.0) * (1.0 - s.delta) * s.n;
  const bool a_event = low_sum <= a_thr;

  EventResult r;
  r.occurred = count_ok && !a_event;
  r.achieved = good;
  r.threshold = count_thr;
  r.witness = {{"column", {c.space.lo[0], c.space.hi[0]}},
               {"mu_hat", mu},
               {"eps_block", eps_g},
               {"minimax", y},
               {"good_blocks", good},
               {"good_threshold", good_thr},
               {"count_condition", count_ok},
               {"subset_cap", cap},
               {"lowest_sum", low_sum},
               {"A_threshold", a_thr},
               {"A_event", a_event}};
  return r;
}

EventResult detect_column_traverse(const EdgeField& field, const EventSpec& s) {
  require_model(field, Model::M1, s);
  require_d(field, 1, s);
  const double mu = need_mu(s);
  const Column c = column(s);
  require_m1_region(field, s.n, s.n);
  const Block b{c.space, c.m, s.n};
  const MinimaxResult mm = minimax_block_value(field, b);
  const double thr = (mu - s.epsilon / 5.0) * (1.0 - s.delta) * s.n;
  EventResult r;
  r.occurred = mm.value >= thr;
  r.achieved = mm.value;
  r.threshold = thr;
  r.witness = {{"column", {c.space.lo[0], c.space.hi[0]}},
               {"mu_hat", mu},
               {"minimax", mm.value},
               {"argmin", site_json(mm.argmin)},
               {"argmin_path", to_json(mm.best_path)}};
  return r;
}

// ---- Model 1: half-line endpoints and the upper cap ------------------------

EventResult detect_endpoint(const EdgeField& field, const EventSpec& s,
                            bool right) {
  require_model(field, Model::M1, s);
  const double mu = need_mu(s);
  if (s.n < 1) throw ConstructionError("horizon n must be >= 1");
  require_m1_region(field, s.n, s.n);
  PathConstraint pc;
  Box end = Box::cube(field.d(), -s.n, s.n);
  if (right)
    end.lo[0] = 0;
  else
    end.hi[0] = 0;
  pc.end_box = end;
  const PassageResult best = last_passage(field, s.n, pc);
  const double thr = (mu - s.epsilon / 2.0) * s.n;
  EventResult r;
  r.occurred = best.value >= thr;
  r.achieved = best.value;
  r.threshold = thr;
  r.witness = {{"mu_hat", mu}, {"best_path", to_json(best)}};
  return r;
}

EventResult detect_upper_cap(const EdgeField& field, const EventSpec& s) {
  require_model(field, Model::M1, s);
  const double mu = need_mu(s);
  const int L = 1 << s.N;
  const int m = checked_int(std::ldexp(s.delta, s.N), "delta 2^N");
  if (m < 1 || m >= L) throw ConstructionError("delta 2^N must lie in [1, 2^N)");
  require_m1_region(field, L, L);
  PathConstraint pc;
  pc.starts = level_sites(m, field.d());
  const PassageResult best = last_passage(field, L - m, pc);
  const double thr = (1.0 - s.delta) * (mu + s.epsilon) * L;
  EventResult r;
  r.occurred = best.value <= thr;
  r.achieved = best.value;
  r.threshold = thr;
  r.witness = {{"mu_hat", mu}, {"start_level", m}, {"best_path", to_json(best)}};
  return r;
}

// ---- shells --------------------------------------------------------------

std::vector<Edge> m1_shell(const EdgeField& field, int k) {
  try {
    return shell_edges_m1(k, field.d(), field.window().level_hi);
  } catch (const LatticeError& e) {
    throw ConstructionError(e.what());
  }
}

EventResult detect_shell_forcing(const EdgeField& field, const EventSpec& s) {
  require_model(field, Model::M1, s);
  if (s.N < 1) throw ConstructionError("N must be >= 1");
  if (s.k < 0 || 2 * s.k > s.N) throw ConstructionError("need 0 <= k <= N/2");
  const double thr = -s.M * std::ldexp(1.0, s.N - s.k) / s.N;
  const auto edges = m1_shell(field, s.k);
  double worst = -kInf;
  EdgeId worst_id = 0;
  std::int64_t violations = 0;
  for (const Edge& e : edges) {
    const double x = field.weight(e.id);
    if (x > thr) ++violations;
    if (x > worst) {
      worst = x;
      worst_id = e.id;
    }
  }
  EventResult r;
  r.occurred = violations == 0;
  r.achieved = worst;
  r.threshold = thr;
  r.witness = {{"shell", s.k},
               {"edges", edges.size()},
               {"violations", violations},
               {"max_edge", worst_id},
               {"max_weight", worst}};
  return r;
}

bool in_band(double scaled, int v, int N) {
  if (v == kInfiniteBand) return scaled == 0.0;
  if (v < 0) throw ConstructionError("band index must be >= 0 or inf");
  return scaled >= std::ldexp(1.0, N - v) && scaled < std::ldexp(1.0, N - v + 1);
}

EventResult detect_band(const EdgeField& field, const EventSpec& s) {
  require_model(field, Model::M1, s);
  const auto edges = m1_shell(field, s.k);
  const double mass = negative_part_mass(field, edges, s.M);
  const double scaled = std::ldexp(mass, -s.k);
  EventResult r;
  r.occurred = in_band(scaled, s.v, s.N);
  r.achieved = scaled;
  r.witness = {{"shell", s.k}, {"v", band_json(s.v)}, {"truncation", s.M},
               {"negative_mass", mass}, {"scaled", scaled},
               {"band_of_value", band_json(dyadic_band(scaled, s.N))}};
  return r;
}

EventResult detect_band_vector(const EdgeField& field, const EventSpec& s) {
  require_model(field, Model::M1, s);
  const int K = s.N + log2_delta(s.delta);
  if (K < 1) throw ConstructionError("N + log2 delta must be >= 1");
  if (static_cast<int>(s.v_vec.size()) != K)
    throw ConstructionError("vvec needs N + log2 delta = " + std::to_string(K) +
                            " entries");
  bool all = true;
  nlohmann::json per = nlohmann::json::array();
  for (int k = 1; k <= K; ++k) {
    const double mass = negative_part_mass(field, m1_shell(field, k), s.M);
    const double scaled = std::ldexp(mass, -k);
    const int v = s.v_vec[static_cast<std::size_t>(k - 1)];
    const bool ok = in_band(scaled, v, s.N);
    all = all && ok;
    per.push_back({{"k", k}, {"v", band_json(v)}, {"scaled", scaled},
                   {"in_band", ok}});
  }
  EventResult r;
  r.occurred = all;
  r.witness = {{"shells", per}, {"truncation", s.M}};
  return r;
}

EventResult detect_forcing_set(const EdgeField& field, const EventSpec& s) {
  require_model(field, Model::M1, s);
  const ForcingSchedule fs =
      forcing_schedule(s.epsilon, s.delta, s.N, s.f, s.m0, s.factor);
  bool all = true;
  nlohmann::json per = nlohmann::json::array();
  for (int j : fs.J) {
    const double thr = -std::ldexp(fs.eps_at(j), j);
    double worst = -kInf;
    for (const Edge& e : m1_shell(field, s.N - j))
      worst = std::max(worst, field.weight(e.id));
    const bool ok = worst <= thr;
    all = all && ok;
    per.push_back({{"j", j}, {"shell", s.N - j}, {"threshold", thr},
                   {"max_weight", worst}, {"ok", ok}});
  }
  EventResult r;
  r.occurred = all;
  r.witness = {{"J", fs.J}, {"per_j", per}, {"f", s.f.describe()}};
  return r;
}

// ---- Model 2 -------------------------------------------------------------

// Lateral interval A_k and the two progress faces of channel k.
struct Channel {
  int x_in = 0;
  int x_out = 0;
  int lo = 0;
  int hi = 0;
};

Channel channel(const EventSpec& s, int k) {
  const int dn = checked_int(s.delta * s.n, "delta * n");
  if (s.l < 1) throw ConstructionError("channel width l must be >= 1");
  if (dn < 1 || 2 * dn >= s.n)
    throw ConstructionError("need 1 <= delta n < n / 2");
  if (k < 0 || (k + 1) * s.l > 2 * dn)
    throw ConstructionError("channel index out of range");
  return Channel{dn, s.n - dn, -dn + k * s.l, -dn + (k + 1) * s.l};
}

struct ChannelEval {
  bool good = false;
  double worst = 0.0;
  Point from, to;
};

ChannelEval eval_channel(const EdgeField& field, const Channel& c, double thr) {
  const Box& w = field.window().box;
  const Box region{Point{w.lo[0], c.lo}, Point{w.hi[0], c.hi}};
  require_m2_box(field, Box{Point{c.x_in, c.lo}, Point{c.x_out, c.hi}});
  require_m2_box(field, region);
  ChannelEval ev;
  ev.worst = -kInf;
  for (int a = c.lo; a <= c.hi; ++a) {
    const Point x{c.x_in, a};
    const auto dist = first_passage_distances(field, x, region);
    for (int b = c.lo; b <= c.hi; ++b) {
      const Point y{c.x_out, b};
      const double t = dist.at(y);
      if (t > ev.worst) {
        ev.worst = t;
        ev.from = x;
        ev.to = y;
      }
    }
  }
  ev.good = ev.worst <= thr;
  return ev;
}

EventResult detect_good_channel(const EdgeField& field, const EventSpec& s) {
  require_model(field, Model::M2, s);
  require_d(field, 2, s);
  const double nu = need_nu(s);
  const double thr = (nu + s.epsilon / 5.0) * (1.0 - 2.0 * s.delta) * s.n;
  const Channel c = channel(s, s.k);
  const ChannelEval ev = eval_channel(field, c, thr);
  EventResult r;
  r.occurred = ev.good;
  r.achieved = ev.worst;
  r.threshold = thr;
  r.witness = {{"lateral", {c.lo, c.hi}},
               {"faces", {c.x_in, c.x_out}},
               {"nu_hat", nu},
               {"worst_pair", {point_json(ev.from), point_json(ev.to)}},
               {"worst_value", ev.worst}};
  return r;
}

EventResult detect_channel_density(const EdgeField& field, const EventSpec& s) {
  require_model(field, Model::M2, s);
  require_d(field, 2, s);
  const double nu = need_nu(s);
  const double thr = (nu + s.epsilon / 5.0) * (1.0 - 2.0 * s.delta) * s.n;
  const int dn = checked_int(s.delta * s.n, "delta * n");
  if (s.l < 1) throw ConstructionError("channel width l must be >= 1");
  const int count = 2 * dn / s.l;
  if (count < 1) throw ConstructionError("no full channel of width l");
  int good = 0;
  nlohmann::json flags = nlohmann::json::array();
  for (int k = 0; k < count; ++k) {
    const ChannelEval ev = eval_channel(field, channel(s, k), thr);
    good += ev.good ? 1 : 0;
    flags.push_back({{"k", k}, {"good", ev.good}, {"worst_value", ev.worst}});
  }
  const double frac = good / (2.0 * dn / s.l);
  EventResult r;
  r.occurred = frac >= s.density;
  r.achieved = frac;
  r.threshold = s.density;
  r.witness = {{"nu_hat", nu}, {"value_threshold", thr}, {"channels", flags},
               {"good", good}};
  return r;
}

EventResult detect_band_m2(const EdgeField& field, const EventSpec& s) {
  require_model(field, Model::M2, s);
  require_d(field, 2, s);
  std::vector<Edge> edges;
  try {
    edges = shell_edges_m2(s.k, s.N, field.window());
  } catch (const LatticeError& e) {
    throw ConstructionError(e.what());
  }
  double z = 0.0;
  for (const Edge& e : edges) z += field.weight(e.id);
  const double scaled = std::ldexp(z, -s.k);
  EventResult r;
  r.occurred = in_band(scaled, s.v, s.N);
  r.achieved = scaled;
  r.witness = {{"shell", s.k}, {"v", band_json(s.v)}, {"sum", z},
               {"scaled", scaled}, {"edges", edges.size()},
               {"band_of_value", band_json(dyadic_band(scaled, s.N))}};
  return r;
}

// Edges {x, y} with min(|x|_1, |y|_1) in [2^L, 2^{L+1}).
std::vector<Edge> l1_level_edges(int L, int d) {
  const int hi = (1 << (L + 1)) - 1;
  std::vector<Edge> out;
  const Box b = Box::cube(d, -hi - 1, hi + 1);
  auto norm = [d](const Point& p) {
    int s = 0;
    for (int i = 0; i < d; ++i) s += std::abs(p[i]);
    return s;
  };
  Point p = b.lo;
  while (true) {
    for (int axis = 0; axis < d; ++axis) {
      Point q = p;
      q[axis] += 1;
      if (!b.contains(q)) continue;
      const int m = std::min(norm(p), norm(q));
      if (m >= (1 << L) && m <= hi) out.push_back(m2_edge(p, q));
    }
    int i = 0;
    for (; i < d; ++i) {
      if (++p[i] <= b.hi[i]) break;
      p[i] = b.lo[i];
    }
    if (i == d) break;
  }
  return out;
}

EventResult detect_forcing_set_m2(const EdgeField& field, const EventSpec& s) {
  require_model(field, Model::M2, s);
  const ForcingSchedule fs =
      forcing_schedule(s.epsilon, s.delta, s.N, s.f, s.m0, s.factor);
  bool all = true;
  nlohmann::json per = nlohmann::json::array();
  for (int j : fs.J) {
    const int L = s.N - j;
    const int reach = (1 << (L + 1));
    require_m2_box(field, Box::cube(field.d(), -reach, reach));
    const double thr = std::ldexp(fs.eps_at(j), j);
    double low = kInf;
    for (const Edge& e : l1_level_edges(L, field.d()))
      low = std::min(low, field.weight(e.id));
    const bool ok = low >= thr;
    all = all && ok;
    per.push_back({{"j", j}, {"level", L}, {"threshold", thr},
                   {"min_weight", low}, {"ok", ok}});
  }
  EventResult r;
  r.occurred = all;
  r.witness = {{"J", fs.J}, {"per_j", per}, {"f", s.f.describe()}};
  return r;
}

EventResult detect_lower_cap_m2(const EdgeField& field, const EventSpec& s) {
  require_model(field, Model::M2, s);
  require_d(field, 2, s);
  const double nu = need_nu(s);
  if (s.N < 1) throw ConstructionError("N must be >= 1");
  const int L = 1 << s.N;
  const int w = checked_int(std::ldexp(s.delta, s.N), "delta 2^N");
  if (w < 1 || w >= L) throw ConstructionError("delta 2^N must lie in [1, 2^N)");
  const Point target{L, 0};
  require_m2_box(field, Box{Point{-w, -w}, Point{L, w}});
  const auto dist = first_passage_distances(field, target, field.window().box);
  double best = kInf;
  Point arg;
  for (int a = -w; a <= w; ++a) {
    for (int b = -w; b <= w; ++b) {
      if (std::abs(a) != w && std::abs(b) != w) continue;
      const double t = dist.at(Point{a, b});
      if (t < best) {
        best = t;
        arg = Point{a, b};
      }
    }
  }
  const double thr = (1.0 - s.delta) * (nu - s.epsilon) * L;
  EventResult r;
  r.occurred = best >= thr;
  r.achieved = best;
  r.threshold = thr;
  r.witness = {{"nu_hat", nu}, {"argmin_start", point_json(arg)},
               {"min_value", best}};
  return r;
}

// ---- parameter strings ---------------------------------------------------

std::vector<std::string> split_top_level(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  int depth = 0;
  for (char c : s) {
    if (c == '(') ++depth;
    if (c == ')') --depth;
    if (c == sep && depth == 0) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double x = 0.0;
  try {
    x = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size() || !std::isfinite(x))
    throw ConstructionError("parameter " + key + ": not a number '" + v + "'");
  return x;
}

int parse_int(const std::string& key, const std::string& v) {
  if (v == "inf") return kInfiniteBand;
  const double x = parse_double(key, v);
  if (x != std::floor(x) || std::abs(x) > 1e9)
    throw ConstructionError("parameter " + key + ": not an integer '" + v + "'");
  return static_cast<int>(x);
}

std::string int_text(int v) {
  return v == kInfiniteBand ? "inf" : std::to_string(v);
}

}  // namespace

std::string to_string(EventName e) {
  for (const auto& [n, s] : event_names())
    if (n == e) return s;
  return "?";
}

EventName event_from_string(const std::string& s) {
  for (const auto& [n, name] : event_names())
    if (name == s) return n;
  throw ConstructionError("unknown event '" + s + "'");
}

const std::vector<EventName>& all_events() {
  static const std::vector<EventName> all = [] {
    std::vector<EventName> v;
    for (const auto& [n, s] : event_names()) v.push_back(n);
    return v;
  }();
  return all;
}

EventSpec parse_event_spec(const std::string& name, const std::string& params) {
  EventSpec s;
  s.name = event_from_string(name);
  for (const std::string& item : split_top_level(params, ',')) {
    const std::string kv = trim(item);
    if (kv.empty()) continue;
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw ConstructionError("parameter '" + kv + "' is not key=value");
    const std::string key = trim(kv.substr(0, eq));
    const std::string val = trim(kv.substr(eq + 1));
    if (key == "n") s.n = parse_int(key, val);
    else if (key == "N") s.N = parse_int(key, val);
    else if (key == "k") s.k = parse_int(key, val);
    else if (key == "v") s.v = parse_int(key, val);
    else if (key == "l") s.l = parse_int(key, val);
    else if (key == "i") s.i = parse_int(key, val);
    else if (key == "r") s.r = parse_int(key, val);
    else if (key == "delta") s.delta = parse_double(key, val);
    else if (key == "eps") s.epsilon = parse_double(key, val);
    else if (key == "M") s.M = parse_double(key, val);
    else if (key == "M0") s.m0 = parse_double(key, val);
    else if (key == "c1") s.c1 = parse_double(key, val);
    else if (key == "density") s.density = parse_double(key, val);
    else if (key == "factor") s.factor = parse_double(key, val);
    else if (key == "eps_block") s.eps_block = parse_double(key, val);
    else if (key == "mu") s.mu_hat = parse_double(key, val);
    else if (key == "nu") s.nu_hat = parse_double(key, val);
    else if (key == "f") {
      try {
        s.f = FSpec::parse(val);
      } catch (const WeightError& e) {
        throw ConstructionError(e.what());
      }
    } else if (key == "vvec") {
      s.v_vec.clear();
      for (const std::string& t : split_top_level(val, ';'))
        s.v_vec.push_back(parse_int(key, trim(t)));
    } else {
      throw ConstructionError("unknown event parameter '" + key + "'");
    }
  }
  return s;
}

std::string format_event_params(const EventSpec& s) {
  std::string out = "n=" + std::to_string(s.n) + ",N=" + std::to_string(s.N) +
                    ",k=" + std::to_string(s.k) + ",v=" + int_text(s.v) +
                    ",l=" + std::to_string(s.l) + ",i=" + std::to_string(s.i) +
                    ",r=" + std::to_string(s.r) + ",delta=" + fmt(s.delta) +
                    ",eps=" + fmt(s.epsilon) + ",M=" + fmt(s.M) +
                    ",M0=" + fmt(s.m0) + ",c1=" + fmt(s.c1) +
                    ",density=" + fmt(s.density) + ",factor=" + fmt(s.factor) +
                    ",f=" + s.f.describe();
  if (!s.v_vec.empty()) {
    out += ",vvec=";
    for (std::size_t q = 0; q < s.v_vec.size(); ++q)
      out += (q ? ";" : "") + int_text(s.v_vec[q]);
  }
  if (s.eps_block) out += ",eps_block=" + fmt(*s.eps_block);
  if (s.mu_hat) out += ",mu=" + fmt(*s.mu_hat);
  if (s.nu_hat) out += ",nu=" + fmt(*s.nu_hat);
  return out;
}

EventResult detect_event(const EdgeField& field, const EventSpec& spec) {
  EventResult r;
  try {
    switch (spec.name) {
      case EventName::H_block: r = detect_h(field, spec, false); break;
      case EventName::G_density: r = detect_h(field, spec, true); break;
      case EventName::J_block: r = detect_j(field, spec, false); break;
      case EventName::K_density: r = detect_j(field, spec, true); break;
      case EventName::GoodBlock: r = detect_good_block(field, spec); break;
      case EventName::GoodChannel: r = detect_good_channel(field, spec); break;
      case EventName::ChannelDensity: r = detect_channel_density(field, spec); break;
      case EventName::ShellForcing_AkN: r = detect_shell_forcing(field, spec); break;
      case EventName::DyadicBand_Bkv: r = detect_band(field, spec); break;
      case EventName::DyadicVector_Av: r = detect_band_vector(field, spec); break;
      case EventName::ForcingSet_VJN: r = detect_forcing_set(field, spec); break;
      case EventName::UpperCap_UdeltaN: r = detect_upper_cap(field, spec); break;
      case EventName::EndpointRight_A1: r = detect_endpoint(field, spec, true); break;
      case EventName::EndpointLeft_A2: r = detect_endpoint(field, spec, false); break;
      case EventName::ColumnConcat_Fk: r = detect_column_concat(field, spec); break;
      case EventName::ColumnTraverse_Dk: r = detect_column_traverse(field, spec); break;
      case EventName::DyadicBandM2_Bkv: r = detect_band_m2(field, spec); break;
      case EventName::ForcingSetM2_WJN: r = detect_forcing_set_m2(field, spec); break;
      case EventName::LowerCapM2_UdeltaN: r = detect_lower_cap_m2(field, spec); break;
    }
  } catch (const PassageError& e) {
    throw ConstructionError(to_string(spec.name) + ": " + e.what());
  }
  r.witness["event"] = to_string(spec.name);
  r.witness["params"] = format_event_params(spec);
  return r;
}

// ---- dyadic classification -----------------------------------------------

int log2_delta(double delta) {
  int e = 0;
  const double m = std::frexp(delta, &e);
  if (!(delta > 0.0 && delta < 1.0) || m != 0.5)
    throw ConstructionError("delta must be a negative power of two, got " +
                            fmt(delta));
  return e - 1;
}

int dyadic_band(double s, int N) {
  if (!(s >= 0.0)) throw ConstructionError("scaled mass must be >= 0");
  if (s == 0.0) return kInfiniteBand;
  if (s >= std::ldexp(1.0, N)) return 0;
  int e = 0;
  std::frexp(s, &e);  // s = m 2^e, m in [1/2, 1): floor(log2 s) = e - 1
  return N - e + 1;
}

double DyadicClassification::inverse_sum() const {
  double t = 0.0;
  for (int x : v)
    if (x != kInfiniteBand) t += std::ldexp(1.0, -x);
  return t;
}

double DyadicClassification::excluded_mass() const {
  double t = 0.0;
  for (std::size_t k = 0; k < scaled.size(); ++k)
    if (!selected[k]) t += scaled[k];
  return t;
}

double DyadicClassification::total_scaled() const {
  return std::accumulate(scaled.begin(), scaled.end(), 0.0);
}

DyadicClassification classify_scaled(const std::vector<double>& scaled, int N,
                                     double delta) {
  const int K = N + log2_delta(delta);
  if (K < 0) throw ConstructionError("N + log2 delta must be >= 0");
  if (static_cast<int>(scaled.size()) != K + 1)
    throw ConstructionError("need N + log2 delta + 1 shell values");
  DyadicClassification c;
  c.N = N;
  c.delta = delta;
  c.scaled = scaled;
  c.mass.resize(scaled.size());
  for (int k = 0; k <= K; ++k) {
    const double s = scaled[static_cast<std::size_t>(k)];
    c.mass[static_cast<std::size_t>(k)] = std::ldexp(s, k);
    const bool sel = s >= std::ldexp(1.0, k + 3);
    const int v = sel ? dyadic_band(s, N) : kInfiniteBand;
    c.selected.push_back(sel);
    c.v.push_back(v);
    c.good.push_back(v != kInfiniteBand && 2 * v <= N - k - 4);
  }
  return c;
}

DyadicClassification classify_dyadic(const EdgeField& field, int N,
                                     double delta) {
  if (field.model() != Model::M1)
    throw ConstructionError("dyadic classification needs a M1 field");
  const int K = N + log2_delta(delta);
  if (K < 0) throw ConstructionError("N + log2 delta must be >= 0");
  std::vector<double> scaled;
  for (int k = 0; k <= K; ++k) {
    const auto edges = m1_shell(field, k);
    scaled.push_back(std::ldexp(negative_part_mass(field, edges), -k));
  }
  DyadicClassification c = classify_scaled(scaled, N, delta);
  return c;
}

ChainCheck check_excluded_mass(const DyadicClassification& c) {
  ChainCheck r;
  r.premise = true;
  r.lhs = c.excluded_mass();
  r.rhs = c.delta * std::ldexp(1.0, c.N + 4);
  r.holds = r.lhs <= r.rhs;
  return r;
}

ChainCheck check_inverse_sum(const DyadicClassification& c, double epsilon) {
  ChainCheck r;
  r.premise = c.total_scaled() >= epsilon * std::ldexp(1.0, c.N) &&
              128.0 * c.delta < epsilon;
  r.lhs = c.inverse_sum();
  r.rhs = 3.0 * epsilon / 8.0;
  r.holds = !r.premise || r.lhs >= r.rhs;
  return r;
}

// ---- forcing schedule ----------------------------------------------------

double ForcingSchedule::total() const {
  return std::accumulate(eps.begin(), eps.end(), 0.0);
}

double ForcingSchedule::mass_in_J() const {
  double t = 0.0;
  for (int j : J) t += eps_at(j);
  return t;
}

ForcingSchedule forcing_schedule(double epsilon, double delta, int N,
                                 const FSpec& f, double m0, double factor) {
  if (!(epsilon > 0.0)) throw ConstructionError("epsilon must be positive");
  if (!(m0 >= 0.0)) throw ConstructionError("M0 must be nonnegative");
  if (!(factor > 0.0)) throw ConstructionError("factor must be positive");
  const int j_lo = -log2_delta(delta);
  if (!(2.0 * delta * m0 < epsilon))
    throw ConstructionError("forcing schedule needs 2 delta M0 < epsilon");
  if (N < j_lo) throw ConstructionError("N must be >= -log2 delta");
  try {
    f.validate(std::ldexp(1.0, j_lo));
  } catch (const WeightError& e) {
    throw ConstructionError(e.what());
  }
  ForcingSchedule s;
  s.j_lo = j_lo;
  s.j_hi = N;
  double norm = 0.0;
  for (int j = j_lo; j <= N; ++j) norm += 1.0 / f(std::ldexp(1.0, j));
  for (int j = j_lo; j <= N; ++j) {
    const double e = factor * epsilon / (f(std::ldexp(1.0, j)) * norm);
    s.eps.push_back(e);
    if (std::ldexp(e, j) >= m0) s.J.push_back(j);
  }
  return s;
}

// ---- shell bounds --------------------------------------------------------

TableField shell_forced_field(int N, double M, int d) {
  if (N < 1 || N > 12) throw ConstructionError("N must lie in [1, 12]");
  const int L = 1 << N;
  TableField field(Window::m1_cone(d, L), 0.0);
  for (int k = 0; 2 * k <= N; ++k) {
    const double x = -M * std::ldexp(1.0, N - k) / N;
    for (const Edge& e : shell_edges_m1(k, d, L)) field.set(e, x);
  }
  return field;
}

ShellBound verify_shell_bound(int N, double M, double epsilon, double mu_hat,
                              int d) {
  if (!(M > 0.0)) throw ConstructionError("shell bound needs M > 0");
  if (!(M >= 4.0 * epsilon)) throw ConstructionError("shell bound needs M >= 4 epsilon");
  const TableField field = shell_forced_field(N, M, d);
  const double L = std::ldexp(1.0, N);
  ShellBound b;
  b.Z = last_passage(field, 1 << N).value;
  b.bound = -(M / 2.0) * L + (mu_hat + epsilon) * L;
  b.holds = b.Z <= b.bound;
  return b;
}

double log_normal_cdf_lower(double x) {
  if (x < 37.0) return std::log(0.5 * std::erfc(x / std::sqrt(2.0)));
  const double z = 1.0 / (x * x);
  return -0.5 * x * x - std::log(x) - 0.5 * std::log(2.0 * M_PI) +
         std::log1p(z * (-1.0 + z * (3.0 - 15.0 * z)));
}

ShellProbability shell_event_probability(int N, int k, double M, int d) {
  if (N < 1) throw ConstructionError("N must be >= 1");
  if (k < 0 || 2 * k > N) throw ConstructionError("need 0 <= k <= N/2");
  if (!(M >= 0.0)) throw ConstructionError("M must be nonnegative");
  ShellProbability p;
  p.edges = static_cast<std::int64_t>(shell_edges_m1(k, d).size());
  p.threshold = -M * std::ldexp(1.0, N - k) / N;
  p.log_p = static_cast<double>(p.edges) * log_normal_cdf_lower(-p.threshold);
  p.p = std::exp(p.log_p);
  return p;
}

// ---- greedy paths --------------------------------------------------------

std::vector<Site> greedy_path(const Site& from, const Site& to) {
  if (from.x.d != to.x.d) throw ConstructionError("dimension mismatch");
  const int steps = to.n - from.n;
  int dist = 0;
  for (int i = 0; i < from.x.d; ++i) dist += std::abs(to.x[i] - from.x[i]);
  if (steps < 1 || dist > steps || (steps - dist) % 2 != 0)
    throw ConstructionError("target " + to_string(to) +
                            " not reachable from " + to_string(from));
  std::vector<Site> path{from};
  Site cur = from;
  for (int t = 0; t < steps; ++t) {
    Point best;
    int best_d = std::numeric_limits<int>::max();
    // Direction order puts the left (decreasing) move of each axis first.
    for (const Edge& e : out_edges(cur)) {
      int dd = 0;
      for (int i = 0; i < cur.x.d; ++i) dd += std::abs(to.x[i] - e.head.x[i]);
      if (dd < best_d) {
        best_d = dd;
        best = e.head.x;
      }
    }
    cur = Site(best, cur.n + 1);
    path.push_back(cur);
  }
  return path;
}

double EdgeHitProfile::scaled() const { return std::ldexp(max_hit, k); }

EdgeHitProfile greedy_edge_hits(int k) {
  if (k < 1 || k > 12) throw ConstructionError("k must lie in [1, 12]");
  const int lo_level = 1 << k;
  const int hi_level = 1 << (k + 1);
  const auto starts = interval_sites(lo_level, -lo_level / 4, lo_level / 4);
  const auto ends = interval_sites(hi_level, -hi_level / 4, hi_level / 4);
  std::map<EdgeId, std::int64_t> hits;
  for (const Site& s : starts) {
    for (const Site& e : ends) {
      const auto p = greedy_path(s, e);
      for (std::size_t q = 1; q < p.size(); ++q) {
        const int dir = p[q].x[0] > p[q - 1].x[0] ? 1 : 0;
        ++hits[m1_edge_id(p[q - 1], dir)];
      }
    }
  }
  EdgeHitProfile prof;
  prof.k = k;
  prof.pairs = static_cast<std::int64_t>(starts.size() * ends.size());
  std::int64_t top = 0;
  EdgeId arg = 0;
  for (const auto& [id, c] : hits) {
    if (c > top) {
      top = c;
      arg = id;
    }
  }
  prof.max_hit = static_cast<double>(top) / static_cast<double>(prof.pairs);
  prof.argmax = decode_edge(arg);
  return prof;
}

}  // namespace ldp
