#pragma once

// Proof objects evaluated on realized fields: block and channel detectors,
// density events, shell events, dyadic classification, the forcing schedule
// and deterministic bound checks.

#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ldp/lattice.hpp"
#include "ldp/passage.hpp"
#include "ldp/weights.hpp"

namespace ldp {

class ConstructionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Band index standing for v = infinity.
inline constexpr int kInfiniteBand = std::numeric_limits<int>::max();

enum class EventName {
  H_block,
  G_density,
  J_block,
  K_density,
  GoodBlock,
  GoodChannel,
  ChannelDensity,
  ShellForcing_AkN,
  DyadicBand_Bkv,
  DyadicVector_Av,
  ForcingSet_VJN,
  UpperCap_UdeltaN,
  EndpointRight_A1,
  EndpointLeft_A2,
  ColumnConcat_Fk,
  ColumnTraverse_Dk,
  DyadicBandM2_Bkv,
  ForcingSetM2_WJN,
  LowerCapM2_UdeltaN,
};

std::string to_string(EventName e);
EventName event_from_string(const std::string& s);
const std::vector<EventName>& all_events();

/// Parameters of a catalog event. Each event reads the subset it needs.
struct EventSpec {
  EventName name = EventName::GoodBlock;
  int n = 0;  // horizon: levels (Model 1) or distance (Model 2)
  int N = 0;  // dyadic scale, horizon 2^N
  int k = 0;  // shell, column or channel index
  int v = 0;  // band index; kInfiniteBand for the empty band
  std::vector<int> v_vec;  // A(v): v_1 .. v_{N + log2 delta}
  int l = 0;  // block or channel width
  int i = 0;  // block position index
  int r = 0;  // block level index
  double delta = 0.25;
  double epsilon = 0.1;
  double M = 0.0;   // forcing strength, or truncation level for bands
  double m0 = 1.0;  // tail threshold M0 of the forcing set
  double c1 = 0.05;
  double density = 0.9;
  double factor = 100.0;  // epsilon_j total mass is factor * epsilon
  /// Goodness slack of blocks inside a column; epsilon / 100 when absent.
  std::optional<double> eps_block;
  FSpec f = FSpec::constant(1.0);
  std::optional<double> mu_hat;
  std::optional<double> nu_hat;
};

/// Builds a spec from a name and "key=value,key=value" parameters. Keys:
/// n N k v vvec l i r delta eps M M0 c1 density factor eps_block f mu nu.
/// `v` and `vvec` entries accept "inf"; vvec entries are ';'-separated and
/// f takes the form printed by FSpec::describe().
EventSpec parse_event_spec(const std::string& name, const std::string& params);
/// Parameter string that parses back to the same spec.
std::string format_event_params(const EventSpec& spec);

struct EventResult {
  bool occurred = false;
  /// Fraction or value compared against the event threshold (NaN if none).
  double achieved = std::numeric_limits<double>::quiet_NaN();
  double threshold = std::numeric_limits<double>::quiet_NaN();
  nlohmann::json witness;
};

EventResult detect_event(const EdgeField& field, const EventSpec& spec);

// ---- dyadic classification -----------------------------------------------

/// Shell indices k = 0 .. N + log2 delta. Entries of `v` equal kInfiniteBand
/// for shells outside the selection set I.
struct DyadicClassification {
  int N = 0;
  double delta = 0.0;
  std::vector<double> mass;    // V_k^-
  std::vector<double> scaled;  // 2^{-k} V_k^-
  std::vector<int> v;
  std::vector<bool> selected;  // k in I: 2^{-k} V_k^- >= 2^{k+3}
  std::vector<bool> good;      // v_k <= (N - k)/2 - 2

  int k_max() const { return static_cast<int>(scaled.size()) - 1; }
  double inverse_sum() const;    // sum_k 2^{-v_k}
  double excluded_mass() const;  // sum_{k not in I} 2^{-k} V_k^-
  double total_scaled() const;   // sum_k 2^{-k} V_k^-
};

/// log2 of a negative power of two; throws otherwise.
int log2_delta(double delta);

DyadicClassification classify_dyadic(const EdgeField& field, int N,
                                     double delta);
/// The same rule applied to given values of 2^{-k} V_k^-, k = 0, 1, ...
DyadicClassification classify_scaled(const std::vector<double>& scaled, int N,
                                     double delta);
/// Band index v with 2^{N-v} <= s < 2^{N-v+1}; 0 when s >= 2^N and
/// kInfiniteBand when s = 0.
int dyadic_band(double s, int N);

struct ChainCheck {
  bool premise = false;  // hypotheses of the chain hold
  bool holds = false;    // conclusion holds (vacuous when !premise)
  double lhs = 0.0;
  double rhs = 0.0;
};

/// Excluded shells: sum_{k not in I} 2^{-k} V_k^- <= delta 2^{N+4}.
ChainCheck check_excluded_mass(const DyadicClassification& c);
/// When sum_k 2^{-k} V_k^- >= epsilon 2^N and 2^7 delta < epsilon:
/// sum_{k in I} 2^{-v_k} >= 3 epsilon / 8.
ChainCheck check_inverse_sum(const DyadicClassification& c, double epsilon);

// ---- forcing schedule ----------------------------------------------------

struct ForcingSchedule {
  int j_lo = 0;  // -log2 delta
  int j_hi = 0;  // N
  std::vector<double> eps;  // eps_j for j = j_lo .. j_hi
  std::vector<int> J;       // {j : 2^j eps_j >= M0}
  double eps_at(int j) const { return eps.at(static_cast<std::size_t>(j - j_lo)); }
  double total() const;
  double mass_in_J() const;
};

ForcingSchedule forcing_schedule(double epsilon, double delta, int N,
                                 const FSpec& f, double m0,
                                 double factor = 100.0);

// ---- shell bounds --------------------------------------------------------

struct ShellBound {
  bool holds = false;
  double Z = 0.0;      // Z_{2^N} on the forced field
  double bound = 0.0;  // -(M/2) 2^N + (mu_hat + epsilon) 2^N
};

/// Forced field X_e = -M 2^{N-k}/N on T_k for k <= N/2, zero beyond.
ShellBound verify_shell_bound(int N, double M, double epsilon, double mu_hat,
                              int d = 1);
/// The forced field itself, on the cone window of level 2^N.
TableField shell_forced_field(int N, double M, int d = 1);

struct ShellProbability {
  double p = 0.0;
  double log_p = 0.0;
  std::int64_t edges = 0;  // |T_k|
  double threshold = 0.0;  // -M 2^{N-k}/N
};

/// Exact P(X_e <= -M 2^{N-k}/N for all e in T_k) for standard normal X.
ShellProbability shell_event_probability(int N, int k, double M, int d = 1);

/// ln Phi(-x), accurate far into the tail.
double log_normal_cdf_lower(double x);

// ---- random greedy paths -------------------------------------------------

/// Deterministic interpolation from `from` to `to` (levels n0 < n1): each
/// step moves to the neighbour closest to the target point, ties to the left.
std::vector<Site> greedy_path(const Site& from, const Site& to);

struct EdgeHitProfile {
  int k = 0;
  std::int64_t pairs = 0;  // start-end pairs enumerated
  double max_hit = 0.0;    // max_e P(e in gamma^k)
  Edge argmax;
  double scaled() const;   // 2^k * max_hit
};

/// Exhaustive law of the greedy path with uniform start in
/// Xi_{2^k}([-2^k/4, 2^k/4]) and uniform end in
/// Xi_{2^{k+1}}([-2^{k+1}/4, 2^{k+1}/4]), d = 1, k >= 1.
EdgeHitProfile greedy_edge_hits(int k);

}  // namespace ldp
