#include "ldp/estimators.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <map>
#include <numeric>

#include "ldp/constructions.hpp"
#include "ldp/passage.hpp"

namespace ldp {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

// Cone of level n flattened for repeated max-plus / log-sum-exp sweeps.
// Sites are indexed in (level, x) order, so every edge points forward.
class ConeDP {
 public:
  ConeDP(int n, int d) : n_(n), d_(d), edges_(cone_edges(n, d)) {
    std::map<Site, int> index;
    auto id_of = [&](const Site& s) {
      auto it = index.emplace(s, static_cast<int>(index.size())).first;
      return it->second;
    };
    id_of(Site(Point::zeros(d), 0));
    for (const Edge& e : edges_) {
      tail_.push_back(id_of(e.tail));
      head_.push_back(id_of(e.head));
    }
    sites_ = static_cast<int>(index.size());
    for (std::size_t i = 0; i < edges_.size(); ++i) {
      position_.emplace(edges_[i].id, static_cast<int>(i));
    }
  }

  const std::vector<Edge>& edges() const { return edges_; }
  int n() const { return n_; }
  int d() const { return d_; }
  int edge_index(EdgeId id) const { return position_.at(id); }

  void load(const EdgeField& field, std::vector<double>& w) const {
    w.resize(edges_.size());
    for (std::size_t i = 0; i < edges_.size(); ++i) w[i] = field.weight(edges_[i].id);
  }

  // Max over n-step paths of the edge sum. Edges are emitted level by level,
  // so a single pass in edge order is a valid topological sweep.
  double max_path(const std::vector<double>& w) const {
    scratch_.assign(static_cast<std::size_t>(sites_), kNegInf);
    scratch_[0] = 0.0;
    double best = kNegInf;
    for (std::size_t i = 0; i < edges_.size(); ++i) {
      const double v = scratch_[static_cast<std::size_t>(tail_[i])] + w[i];
      double& h = scratch_[static_cast<std::size_t>(head_[i])];
      if (v > h) h = v;
      if (edges_[i].head.n == n_ && v > best) best = v;
    }
    return best;
  }

  // log of sum over n-step paths of exp(sum of a along the path).
  double log_sum_paths(const std::vector<double>& a) const {
    scratch_.assign(static_cast<std::size_t>(sites_), kNegInf);
    scratch_[0] = 0.0;
    double total = kNegInf;
    for (std::size_t i = 0; i < edges_.size(); ++i) {
      const double v = scratch_[static_cast<std::size_t>(tail_[i])] + a[i];
      double& h = scratch_[static_cast<std::size_t>(head_[i])];
      h = log_add(h, v);
      if (edges_[i].head.n == n_) total = log_add(total, v);
    }
    return total;
  }

 private:
  int n_;
  int d_;
  std::vector<Edge> edges_;
  std::vector<int> tail_;
  std::vector<int> head_;
  int sites_ = 0;
  std::map<EdgeId, int> position_;
  mutable std::vector<double> scratch_;
};

void validate_spec(const ModelSpec& spec, int n) {
  if (n < 1) throw EstimationError("horizon n must be >= 1");
  if (spec.d < 1) throw EstimationError("dimension d must be >= 1");
  if (spec.model == Model::M2) {
    if (!spec.weights.nonnegative()) {
      throw EstimationError("Model 2 needs nonnegative passage times, got " +
                            spec.weights.describe());
    }
    if (spec.lateral && *spec.lateral < 0) {
      throw EstimationError("lateral half-width must be >= 0");
    }
  }
}

std::string join(const std::vector<std::string>& parts, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

}  // namespace

// ---- names ---------------------------------------------------------------

std::string to_string(Method m) {
  switch (m) {
    case Method::NaiveMC: return "NaiveMC";
    case Method::Exhaustive: return "Exhaustive";
    case Method::TiltedIS: return "TiltedIS";
  }
  return "?";
}

std::string to_string(Side s) { return s == Side::Lower ? "lower" : "upper"; }

std::string to_string(Functional f) {
  return f == Functional::Point ? "point" : "plane";
}

Method method_from_string(const std::string& s) {
  for (Method m : {Method::NaiveMC, Method::Exhaustive, Method::TiltedIS}) {
    if (s == to_string(m)) return m;
  }
  throw EstimationError("unknown method '" + s + "'");
}

Side side_from_string(const std::string& s) {
  if (s == "lower") return Side::Lower;
  if (s == "upper") return Side::Upper;
  throw EstimationError("unknown side '" + s + "'");
}

Functional functional_from_string(const std::string& s) {
  if (s == "point") return Functional::Point;
  if (s == "plane") return Functional::Plane;
  throw EstimationError("unknown functional '" + s + "'");
}

std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

// ---- model plumbing ------------------------------------------------------

Window window_for(const ModelSpec& spec, int n) {
  validate_spec(spec, n);
  if (spec.model == Model::M1) return Window::m1_cone(spec.d, n);
  const int pad = (n + 1) / 2;
  const int w = spec.lateral.value_or(n);
  Box b = Box::cube(spec.d, -w, w);
  b.lo[0] = -pad;
  b.hi[0] = n + pad;
  return Window::m2_box(b);
}

std::vector<Edge> relevant_edges(const ModelSpec& spec, int n) {
  const Window win = window_for(spec, n);
  if (spec.model == Model::M1) return cone_edges(n, spec.d);
  std::vector<Edge> out;
  const Box& b = win.box;
  Point p = b.lo;
  while (true) {
    for (int axis = 0; axis < spec.d; ++axis) {
      if (p[axis] < b.hi[axis]) {
        Point q = p;
        ++q[axis];
        out.push_back(m2_edge(p, q));
      }
    }
    int i = 0;
    while (i < spec.d && p[i] == b.hi[i]) {
      p[i] = b.lo[i];
      ++i;
    }
    if (i == spec.d) break;
    ++p[i];
  }
  return out;
}

double passage_value(const ModelSpec& spec, const EdgeField& field, int n) {
  if (field.model() != spec.model || field.d() != spec.d) {
    throw EstimationError("field does not match the model spec");
  }
  if (spec.model == Model::M1) return last_passage(field, n).value;
  if (spec.functional == Functional::Point) {
    return first_passage_point(field, n).value;
  }
  return first_passage_plane(field, n).value;
}

std::int64_t default_max_enum() {
  if (const char* env = std::getenv("LDP_MAX_ENUM")) {
    char* end = nullptr;
    const long long v = std::strtoll(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return v;
  }
  return std::int64_t{1} << 20;
}

// ---- time constants ------------------------------------------------------

TimeConstantEstimate estimate_time_constant(const ModelSpec& spec,
                                            const std::vector<int>& n_grid,
                                            int replicas, std::uint64_t seed) {
  if (n_grid.size() < 3) throw EstimationError("n-grid needs >= 3 points");
  for (std::size_t i = 1; i < n_grid.size(); ++i) {
    if (n_grid[i] <= n_grid[i - 1]) {
      throw EstimationError("n-grid must be strictly increasing");
    }
  }
  if (replicas < 30) throw EstimationError("need >= 30 replicas");
  for (int n : n_grid) validate_spec(spec, n);

  TimeConstantEstimate out;
  out.model = spec.model;
  out.n_grid = n_grid;
  out.replicas = replicas;
  out.seed = seed;
  for (int n : n_grid) {
    const Window win = window_for(spec, n);
    std::optional<ConeDP> dp;
    if (spec.model == Model::M1) dp.emplace(n, spec.d);
    std::vector<double> w;
    double sum = 0.0;
    double sum2 = 0.0;
    for (int r = 0; r < replicas; ++r) {
      FieldSample field(derive_seed(seed, static_cast<std::uint64_t>(r)), win,
                        spec.weights);
      double v;
      if (dp) {
        dp->load(field, w);
        v = dp->max_path(w);
      } else {
        v = passage_value(spec, field, n);
      }
      v /= n;
      sum += v;
      sum2 += v * v;
    }
    const double mean = sum / replicas;
    const double var =
        std::max(0.0, (sum2 - replicas * mean * mean) / (replicas - 1));
    out.mean.push_back(mean);
    out.se.push_back(std::sqrt(var / replicas));
  }
  out.estimate = out.mean.back();
  out.estimate_se = out.se.back();
  out.monotone = true;
  for (std::size_t i = 1; i < n_grid.size(); ++i) {
    const double tol = 2.0 * std::hypot(out.se[i], out.se[i - 1]);
    const double step = out.mean[i] - out.mean[i - 1];
    const bool ok = spec.model == Model::M1 ? step >= -tol : step <= tol;
    if (!ok) out.monotone = false;
  }
  return out;
}

// ---- tilt proposals ------------------------------------------------------

TiltProposal TiltProposal::from_schedule(TiltSchedule s, double strength) {
  TiltProposal t;
  t.kind = Kind::Schedule;
  t.schedule = std::move(s);
  t.strength = strength;
  return t;
}

TiltProposal TiltProposal::path_mixture(double theta) {
  TiltProposal t;
  t.kind = Kind::PathMixture;
  t.theta = theta;
  t.strength = theta;
  return t;
}

std::string TiltProposal::describe() const {
  if (kind == Kind::PathMixture) return "path(" + format_number(theta) + ")";
  std::vector<std::string> parts;
  for (double th : schedule.shell_theta) parts.push_back(format_number(th));
  return "shells(base=" + format_number(schedule.base) + ";" +
         join(parts, ";") + ")";
}

TiltSchedule shell_tilt_schedule(int N, double delta, double M,
                                 const WeightModel& weights) {
  if (N < 1) throw EstimationError("shell schedule needs N >= 1");
  if (!(M >= 0.0)) throw EstimationError("tilt strength M must be >= 0");
  int log_delta = 0;
  try {
    log_delta = log2_delta(delta);
  } catch (const ConstructionError& e) {
    throw EstimationError(e.what());
  }
  const int k_hi = std::min(N / 2, N + log_delta);
  if (k_hi < 0) throw EstimationError("no shell inside the window");
  TiltSchedule s;
  for (int k = 0; k <= k_hi; ++k) {
    const double shift = -M * std::ldexp(1.0, N - k) / N;
    try {
      s.shell_theta.push_back(weights.theta_for_mean_shift(shift));
    } catch (const WeightError& e) {
      throw EstimationError(std::string("shell tilt: ") + e.what());
    }
  }
  return s;
}

// ---- large-deviation probabilities -------------------------------------

double event_threshold(const LDRequest& r) {
  const double c =
      r.side == Side::Lower ? r.center - r.epsilon : r.center + r.epsilon;
  return c * r.n;
}

bool event_occurs(const LDRequest& r, double value) {
  const double t = event_threshold(r);
  const double tol = 1e-12 * std::max(1.0, std::abs(t));
  return r.side == Side::Lower ? value <= t + tol : value >= t - tol;
}

std::pair<double, double> wilson_interval(std::int64_t hits,
                                          std::int64_t trials, double z) {
  if (trials <= 0 || hits < 0 || hits > trials) {
    throw EstimationError("wilson_interval: bad counts");
  }
  const double n = static_cast<double>(trials);
  const double p = hits / n;
  const double z2 = z * z;
  const double centre = (p + z2 / (2 * n)) / (1 + z2 / n);
  const double half =
      z / (1 + z2 / n) * std::sqrt(p * (1 - p) / n + z2 / (4 * n * n));
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

double zero_hit_upper_bound(std::int64_t trials, double alpha) {
  if (trials <= 0) throw EstimationError("zero_hit_upper_bound: no trials");
  return -std::expm1(std::log(alpha) / static_cast<double>(trials));
}

namespace {

LDEstimate skeleton(const LDRequest& r) {
  LDEstimate e;
  e.model = r.model.model;
  e.d = r.model.d;
  e.n = r.n;
  e.epsilon = r.epsilon;
  e.side = r.side;
  e.method = r.method;
  e.replicas = r.replicas;
  e.seed = r.seed;
  e.center = r.center;
  e.threshold = event_threshold(r);
  if (r.center_stderr) {
    e.eps_band = {r.epsilon - *r.center_stderr, r.epsilon + *r.center_stderr};
  }
  return e;
}

void set_probability(LDEstimate& e, double p) {
  e.p_hat = p;
  e.log_p_hat = p > 0 ? std::log(p) : kNegInf;
}

// Evaluates the functional with the cone DP for Model 1 and passage search
// otherwise.
class Evaluator {
 public:
  Evaluator(const ModelSpec& spec, int n) : spec_(spec), n_(n) {
    if (spec.model == Model::M1) dp_.emplace(n, spec.d);
  }
  double operator()(const EdgeField& field) {
    if (!dp_) return passage_value(spec_, field, n_);
    dp_->load(field, w_);
    return dp_->max_path(w_);
  }
  const ConeDP* dp() const { return dp_ ? &*dp_ : nullptr; }

 private:
  const ModelSpec& spec_;
  int n_;
  std::optional<ConeDP> dp_;
  std::vector<double> w_;
};

LDEstimate naive_mc(const LDRequest& r) {
  if (r.replicas < 1) throw EstimationError("need >= 1 replica");
  LDEstimate e = skeleton(r);
  const Window win = window_for(r.model, r.n);
  Evaluator eval(r.model, r.n);
  std::int64_t hits = 0;
  for (std::int64_t i = 0; i < r.replicas; ++i) {
    FieldSample field(derive_seed(r.seed, static_cast<std::uint64_t>(i)), win,
                      r.model.weights);
    if (event_occurs(r, eval(field))) ++hits;
  }
  e.hits = hits;
  set_probability(e, static_cast<double>(hits) / r.replicas);
  std::tie(e.ci_lo, e.ci_hi) = wilson_interval(hits, r.replicas);
  if (hits == 0) {
    e.zero_hits = true;
    e.upper_bound = zero_hit_upper_bound(r.replicas);
    e.se_log = std::numeric_limits<double>::infinity();
  } else {
    e.se_log = std::sqrt((1.0 - e.p_hat) / static_cast<double>(hits));
  }
  return e;
}

// Discrete-law support of the model, sorted.
const DiscreteLaw& discrete_of(const ModelSpec& spec) {
  if (spec.weights.kind() != WeightModel::Kind::Discrete) {
    throw EstimationError("Exhaustive needs a discrete weight law, got " +
                          spec.weights.describe());
  }
  if (spec.weights.tilt() || spec.weights.shift() != 0.0) {
    throw EstimationError("Exhaustive needs an untilted, unshifted law");
  }
  return spec.weights.discrete_law();
}

// Calls visit(values) for every assignment of support points to `edges`
// (mixed radix, first edge fastest). Throws when the count exceeds `cap`.
template <class Visit>
std::int64_t for_each_assignment(std::size_t edges, std::size_t support,
                                 std::int64_t cap, Visit&& visit) {
  const double log_count =
      static_cast<double>(edges) * std::log(static_cast<double>(support));
  if (log_count > std::log(static_cast<double>(cap)) + 1e-9) {
    throw EnumerationCapError("Exhaustive would enumerate " +
                              std::to_string(support) + "^" +
                              std::to_string(edges) + " fields (cap " +
                              std::to_string(cap) + ")");
  }
  std::vector<std::size_t> digit(edges, 0);
  std::int64_t count = 0;
  while (true) {
    visit(digit);
    ++count;
    std::size_t i = 0;
    while (i < edges && digit[i] + 1 == support) digit[i++] = 0;
    if (i == edges) break;
    ++digit[i];
  }
  return count;
}

LDEstimate exhaustive(const LDRequest& r) {
  const DiscreteLaw& law = discrete_of(r.model);
  LDEstimate e = skeleton(r);
  e.seed = 0;
  const double lo = r.n * law.values.front();
  const double hi = r.n * law.values.back();
  const double t = e.threshold;
  const std::string range = "value in [" + format_number(lo) + ", " +
                            format_number(hi) + "], threshold " +
                            format_number(t);
  const bool impossible = r.side == Side::Lower ? lo > t : hi < t;
  const bool certain = r.side == Side::Lower ? hi <= t : lo >= t;
  if (impossible || certain) {
    set_probability(e, impossible ? 0.0 : 1.0);
    e.hits = 0;
    e.replicas = 0;
    e.certificate = std::string("range bound: ") + range +
                    (impossible ? " (event impossible)" : " (event certain)");
    return e;
  }

  const std::vector<Edge> edges = relevant_edges(r.model, r.n);
  const Window win = window_for(r.model, r.n);
  std::optional<ConeDP> dp;
  if (r.model.model == Model::M1) dp.emplace(r.n, r.model.d);
  std::vector<double> w(edges.size());
  TableField table(win);
  double total = 0.0;
  std::int64_t hits = 0;
  const std::int64_t fields = for_each_assignment(
      edges.size(), law.values.size(), r.max_enum,
      [&](const std::vector<std::size_t>& digit) {
        double prob = 1.0;
        for (std::size_t i = 0; i < edges.size(); ++i) {
          w[i] = law.values[digit[i]];
          prob *= law.probs[digit[i]];
        }
        double v;
        if (dp) {
          v = dp->max_path(w);
        } else {
          for (std::size_t i = 0; i < edges.size(); ++i) table.set(edges[i], w[i]);
          v = passage_value(r.model, table, r.n);
        }
        if (event_occurs(r, v)) {
          total += prob;
          ++hits;
        }
      });
  set_probability(e, std::min(1.0, total));
  e.hits = hits;
  e.replicas = fields;
  e.ci_lo = e.ci_hi = e.p_hat;
  e.certificate = "enumerated " + std::to_string(fields) + " fields over " +
                  std::to_string(edges.size()) + " edges";
  return e;
}

void check_tilt_domain(const WeightModel& m, double theta) {
  if (!m.in_mgf_domain(theta)) {
    throw EstimationError("tilt " + format_number(theta) +
                          " outside the MGF domain of " + m.describe());
  }
}

LDEstimate tilted_is(const LDRequest& r) {
  if (r.replicas < 2) throw EstimationError("TiltedIS needs >= 2 replicas");
  const WeightModel& base = r.model.weights;
  if (base.tilt()) throw EstimationError("TiltedIS needs an untilted base law");
  LDEstimate e = skeleton(r);
  e.tilt = r.tilt.describe();
  e.tilt_strength = r.tilt.strength;
  const Window win = window_for(r.model, r.n);
  const std::vector<Edge> edges = relevant_edges(r.model, r.n);
  std::vector<double> log_w;  // log weights of the hits

  if (r.tilt.kind == TiltProposal::Kind::Schedule) {
    const TiltSchedule& s = r.tilt.schedule;
    if (!s.shell_theta.empty() && r.model.model != Model::M1) {
      throw EstimationError("shell schedules address Model 1 cone edges");
    }
    check_tilt_domain(base, s.base);
    for (double th : s.shell_theta) check_tilt_domain(base, th);
    Evaluator eval(r.model, r.n);
    for (std::int64_t i = 0; i < r.replicas; ++i) {
      FieldSample field(derive_seed(r.seed, static_cast<std::uint64_t>(i)), win,
                        base, s);
      if (event_occurs(r, eval(field))) {
        log_w.push_back(log_likelihood_ratio(field, edges));
      }
    }
  } else {
    if (r.model.model != Model::M1) {
      throw EstimationError("path-mixture tilts are Model 1 only");
    }
    if (base.shift() != 0.0) {
      throw EstimationError("path-mixture tilts need an unshifted law");
    }
    const double theta = r.tilt.theta;
    check_tilt_domain(base, theta);
    const double log_m = base.log_mgf(theta);
    const ConeDP dp(r.n, r.model.d);
    const double log_paths = r.n * std::log(2.0 * r.model.d);
    std::vector<double> w;
    std::vector<double> a(dp.edges().size());
    for (std::int64_t i = 0; i < r.replicas; ++i) {
      const std::uint64_t seed = derive_seed(r.seed, static_cast<std::uint64_t>(i));
      FieldSample field(seed, win, base);
      dp.load(field, w);
      // Draw the path: one uniform per step from a stream separate from the
      // edge uniforms, then resample its edges from the tilted law.
      const std::uint64_t path_seed = derive_seed(seed, 1);
      Site at(Point::zeros(r.model.d), 0);
      for (int step = 0; step < r.n; ++step) {
        const double u = edge_uniform(path_seed, static_cast<EdgeId>(step));
        const int dir = std::min(2 * r.model.d - 1,
                                 static_cast<int>(u * 2 * r.model.d));
        const Edge edge = m1_edge(at, dir);
        const std::size_t k = static_cast<std::size_t>(dp.edge_index(edge.id));
        w[k] = base.quantile(edge_uniform(seed, edge.id), theta);
        at = edge.head;
      }
      if (!event_occurs(r, dp.max_path(w))) continue;
      for (std::size_t k = 0; k < w.size(); ++k) a[k] = theta * w[k] - log_m;
      log_w.push_back(-(dp.log_sum_paths(a) - log_paths));
    }
  }

  const double R = static_cast<double>(r.replicas);
  e.hits = static_cast<std::int64_t>(log_w.size());
  if (log_w.empty()) {
    e.zero_hits = true;
    set_probability(e, 0.0);
    e.se_log = std::numeric_limits<double>::infinity();
    e.ess = 0.0;
    return e;
  }
  double s1 = kNegInf;
  double s2 = kNegInf;
  for (double lw : log_w) {
    s1 = log_add(s1, lw);
    s2 = log_add(s2, 2.0 * lw);
  }
  e.log_p_hat = s1 - std::log(R);
  e.p_hat = std::exp(e.log_p_hat);
  // ratio = mean(Y^2) / mean(Y)^2 for Y_i = w_i 1_A.
  const double log_ratio = (s2 - std::log(R)) - 2.0 * e.log_p_hat;
  const double ratio = std::exp(log_ratio);
  e.se_log = std::sqrt(std::max(0.0, ratio - 1.0) / (R - 1.0));
  e.ess = R / ratio;
  if (e.p_hat > 1.0) {
    // Possible for heavy weights with few replicas; keep the invariant.
    e.p_hat = 1.0;
    e.log_p_hat = 0.0;
  }
  return e;
}

}  // namespace

LDEstimate estimate_ld_probability(const LDRequest& r) {
  validate_spec(r.model, r.n);
  if (!(r.epsilon > 0.0)) throw EstimationError("epsilon must be positive");
  if (!std::isfinite(r.center)) throw EstimationError("center must be finite");
  switch (r.method) {
    case Method::NaiveMC: return naive_mc(r);
    case Method::Exhaustive: return exhaustive(r);
    case Method::TiltedIS: return tilted_is(r);
  }
  throw EstimationError("unknown method");
}

TiltSearch estimate_with_tilt_search(const LDRequest& base,
                                     const std::vector<TiltProposal>& candidates,
                                     std::int64_t pilot_replicas) {
  if (candidates.empty()) throw EstimationError("no tilt candidates");
  if (base.method != Method::TiltedIS) {
    throw EstimationError("tilt search needs method TiltedIS");
  }
  TiltSearch out;
  double best = -1.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    LDRequest pilot = base;
    pilot.tilt = candidates[i];
    pilot.replicas = pilot_replicas;
    pilot.seed = derive_seed(base.seed ^ 0x9e3779b97f4a7c15ULL, i);
    const LDEstimate e = estimate_ld_probability(pilot);
    const double ess = std::isnan(e.ess) ? 0.0 : e.ess;
    out.strengths.push_back(candidates[i].strength);
    out.pilot_ess.push_back(ess);
    if (ess > best) {
      best = ess;
      out.best = i;
    }
  }
  LDRequest main = base;
  main.tilt = candidates[out.best];
  out.estimate = estimate_ld_probability(main);
  return out;
}

IsEnumeration is_mean_by_enumeration(const LDRequest& r) {
  validate_spec(r.model, r.n);
  if (r.model.model != Model::M1) {
    throw EstimationError("IS enumeration is Model 1 only");
  }
  if (r.tilt.kind != TiltProposal::Kind::Schedule) {
    throw EstimationError("IS enumeration needs a schedule tilt");
  }
  const DiscreteLaw& law = discrete_of(r.model);
  const WeightModel& m = r.model.weights;
  const ConeDP dp(r.n, r.model.d);
  const auto& edges = dp.edges();
  const std::size_t K = law.values.size();

  // Per-edge tilted pmf q_i = p_i exp(theta v_i - ln M(theta)).
  std::vector<double> theta(edges.size());
  std::vector<double> log_m(edges.size());
  std::vector<std::vector<double>> q(edges.size(), std::vector<double>(K));
  for (std::size_t e = 0; e < edges.size(); ++e) {
    theta[e] = r.tilt.schedule.theta(edges[e].id);
    check_tilt_domain(m, theta[e]);
    log_m[e] = theta[e] == 0.0 ? 0.0 : m.log_mgf(theta[e]);
    for (std::size_t i = 0; i < K; ++i) {
      q[e][i] = law.probs[i] * std::exp(theta[e] * law.values[i] - log_m[e]);
    }
  }
  IsEnumeration out;
  std::vector<double> w(edges.size());
  out.fields = for_each_assignment(
      edges.size(), K, r.max_enum, [&](const std::vector<std::size_t>& digit) {
        double p = 1.0;
        double qw = 1.0;
        double llr = 0.0;
        for (std::size_t e = 0; e < edges.size(); ++e) {
          w[e] = law.values[digit[e]];
          p *= law.probs[digit[e]];
          qw *= q[e][digit[e]];
          if (theta[e] != 0.0) llr += -theta[e] * w[e] + log_m[e];
        }
        if (!event_occurs(r, dp.max_path(w))) return;
        out.exact += p;
        out.is_mean += qw * std::exp(llr);
      });
  return out;
}

// ---- rate forms ----------------------------------------------------------

RateFit fit_rate(const std::vector<std::pair<int, double>>& points, int d) {
  if (d < 1) throw EstimationError("fit_rate: d must be >= 1");
  if (points.size() < 3) throw EstimationError("fit_rate needs >= 3 points");
  std::vector<int> ns;
  for (const auto& [n, lp] : points) {
    if (n < 2) throw EstimationError("fit_rate needs n >= 2");
    if (!(lp < 0.0) || !std::isfinite(lp)) {
      throw EstimationError("fit_rate needs 0 < p_hat < 1 at every point");
    }
    ns.push_back(n);
  }
  std::sort(ns.begin(), ns.end());
  if (std::unique(ns.begin(), ns.end()) - ns.begin() < 3) {
    throw EstimationError("fit_rate needs >= 3 distinct n");
  }

  struct Form {
    std::string name;
    double (*log_g)(double n, int d);
  };
  std::vector<Form> forms = {
      {"n", [](double n, int) { return std::log(n); }},
      {"n^2/log n",
       [](double n, int) { return 2 * std::log(n) - std::log(std::log(n)); }},
      {"n^2", [](double n, int) { return 2 * std::log(n); }},
  };
  if (d + 1 != 2) {
    forms.push_back({"n^(d+1)", [](double n, int dd) {
                       return (dd + 1) * std::log(n);
                     }});
  }
  RateFit fit;
  fit.d = d;
  for (const Form& f : forms) {
    double acc = 0.0;
    for (const auto& [n, lp] : points) acc += std::log(-lp) - f.log_g(n, d);
    const double log_c = acc / static_cast<double>(points.size());
    double res = 0.0;
    for (const auto& [n, lp] : points) {
      const double r = std::log(-lp) - log_c - f.log_g(n, d);
      res += r * r;
    }
    fit.forms.push_back({f.name, std::exp(log_c), res});
  }
  for (std::size_t i = 1; i < fit.forms.size(); ++i) {
    if (fit.forms[i].residual < fit.forms[fit.selected].residual) fit.selected = i;
  }
  return fit;
}

// ---- serialization -------------------------------------------------------

std::vector<std::string> ld_csv_header() {
  return {"model", "d",         "n",      "epsilon", "side", "method",
          "p_hat", "log_p_hat", "stderr", "ess",     "seed"};
}

std::vector<std::string> ld_csv_row(const LDEstimate& e) {
  return {to_string(e.model),       std::to_string(e.d),
          std::to_string(e.n),      format_number(e.epsilon),
          to_string(e.side),        to_string(e.method),
          format_number(e.p_hat),   format_number(e.log_p_hat),
          format_number(e.se_log),  format_number(e.ess),
          std::to_string(e.seed)};
}

namespace {
nlohmann::json number(double x) {
  if (std::isfinite(x)) return x;
  return format_number(x);
}
}  // namespace

nlohmann::json to_json(const LDEstimate& e) {
  nlohmann::json j;
  j["schema"] = kEstimateSchemaVersion;
  j["model"] = to_string(e.model);
  j["d"] = e.d;
  j["n"] = e.n;
  j["epsilon"] = e.epsilon;
  j["side"] = to_string(e.side);
  j["method"] = to_string(e.method);
  j["replicas"] = e.replicas;
  j["seed"] = e.seed;
  j["tilt"] = e.tilt;
  j["tilt_strength"] = e.tilt_strength;
  j["center"] = e.center;
  j["threshold"] = e.threshold;
  j["p_hat"] = e.p_hat;
  j["log_p_hat"] = number(e.log_p_hat);
  j["stderr"] = number(e.se_log);
  j["ess"] = number(e.ess);
  j["hits"] = e.hits;
  j["ci"] = {e.ci_lo, e.ci_hi};
  j["zero_hits"] = e.zero_hits;
  j["upper_bound"] = number(e.upper_bound);
  j["certificate"] = e.certificate;
  if (e.eps_band) j["eps_band"] = {e.eps_band->first, e.eps_band->second};
  return j;
}

nlohmann::json to_json(const TimeConstantEstimate& e) {
  nlohmann::json j;
  j["schema"] = kEstimateSchemaVersion;
  j["model"] = to_string(e.model);
  j["n_grid"] = e.n_grid;
  j["mean"] = e.mean;
  j["stderr"] = e.se;
  j["estimate"] = e.estimate;
  j["estimate_stderr"] = e.estimate_se;
  j["monotone"] = e.monotone;
  j["replicas"] = e.replicas;
  j["seed"] = e.seed;
  return j;
}

nlohmann::json to_json(const RateFit& f) {
  nlohmann::json j;
  j["schema"] = kEstimateSchemaVersion;
  j["d"] = f.d;
  j["selected"] = f.best().name;
  for (const RateForm& form : f.forms) {
    j["forms"].push_back(
        {{"name", form.name}, {"c", form.c}, {"residual", form.residual}});
  }
  return j;
}

}  // namespace ldp
