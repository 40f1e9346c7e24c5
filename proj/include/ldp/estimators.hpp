#pragma once

// Time constants, large-deviation probabilities and rate-form regression.

#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ldp/lattice.hpp"
#include "ldp/weights.hpp"

namespace ldp {

class EstimationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Method { NaiveMC, Exhaustive, TiltedIS };
enum class Side { Lower, Upper };
/// Model 2 functional: a_n (point to point) or G_n (point to plane).
enum class Functional { Point, Plane };

std::string to_string(Method m);
std::string to_string(Side s);
std::string to_string(Functional f);
Method method_from_string(const std::string& s);
Side side_from_string(const std::string& s);
Functional functional_from_string(const std::string& s);

struct ModelSpec {
  Model model = Model::M1;
  int d = 1;
  WeightModel weights = WeightModel::gaussian(0.0, 1.0);
  Functional functional = Functional::Point;
  /// Model 2 half-width in the lateral axes; n when absent.
  std::optional<int> lateral;
};

/// Field window used at horizon n. Model 1: the cone of level n. Model 2:
/// x_1 in [-ceil(n/2), n + ceil(n/2)], other axes in [-lateral, lateral].
Window window_for(const ModelSpec& spec, int n);
/// Edges whose weights can influence the functional at horizon n.
std::vector<Edge> relevant_edges(const ModelSpec& spec, int n);
/// Z_n (Model 1) or a_n / G_n (Model 2) on a field covering window_for(n).
double passage_value(const ModelSpec& spec, const EdgeField& field, int n);

/// Largest number of fields Exhaustive may enumerate: LDP_MAX_ENUM, else 2^20.
std::int64_t default_max_enum();

// ---- time constants ------------------------------------------------------

struct TimeConstantEstimate {
  Model model = Model::M1;
  std::vector<int> n_grid;
  std::vector<double> mean;  // E[value_n] / n
  std::vector<double> se;  // standard error of the same
  double estimate = 0.0;     // last grid point
  double estimate_se = 0.0;
  /// Nondecreasing (Model 1) or nonincreasing (Model 2) within
  /// 2 sqrt(se_i^2 + se_{i+1}^2) between consecutive grid points.
  bool monotone = false;
  int replicas = 0;
  std::uint64_t seed = 0;
};

/// Replica r uses field seed derive_seed(seed, r) at every n, so the grid
/// shares edges (common random numbers).
TimeConstantEstimate estimate_time_constant(const ModelSpec& spec,
                                            const std::vector<int>& n_grid,
                                            int replicas, std::uint64_t seed);

// ---- large-deviation probabilities -------------------------------------

/// Change of measure for TiltedIS.
struct TiltProposal {
  enum class Kind { Schedule, PathMixture };
  Kind kind = Kind::Schedule;
  /// Per-shell tilts (Kind::Schedule).
  TiltSchedule schedule;
  /// Model 1 only (Kind::PathMixture): a uniformly random directed path is
  /// drawn and its edges are tilted by theta; the likelihood ratio is taken
  /// against the mixture over all (2d)^n paths.
  double theta = 0.0;
  /// Free-form tag, e.g. the strength the proposal was built from.
  double strength = 0.0;

  static TiltProposal from_schedule(TiltSchedule s, double strength = 0.0);
  static TiltProposal path_mixture(double theta);
  std::string describe() const;
};

struct LDRequest {
  ModelSpec model;
  int n = 2;
  double epsilon = 0.1;
  Side side = Side::Lower;
  Method method = Method::NaiveMC;
  /// mu_hat (Model 1) or nu_hat (Model 2).
  double center = 0.0;
  std::optional<double> center_stderr;
  std::int64_t replicas = 10000;
  std::uint64_t seed = 1;
  TiltProposal tilt;
  std::int64_t max_enum = default_max_enum();
};

/// (center - eps) n for the lower side, (center + eps) n for the upper side.
double event_threshold(const LDRequest& r);
/// Comparison with the threshold up to a relative 1e-12, so thresholds built
/// from decimal inputs still hit lattice-valued sums.
bool event_occurs(const LDRequest& r, double value);

struct LDEstimate {
  Model model = Model::M1;
  int d = 1;
  int n = 0;
  double epsilon = 0.0;
  Side side = Side::Lower;
  Method method = Method::NaiveMC;
  std::int64_t replicas = 0;
  std::uint64_t seed = 0;
  std::string tilt;  // TiltProposal::describe(), empty otherwise
  double tilt_strength = 0.0;
  double center = 0.0;
  double threshold = 0.0;

  double p_hat = 0.0;
  double log_p_hat = -std::numeric_limits<double>::infinity();
  double se_log = 0.0;  // standard error of log p_hat
  double ess = std::numeric_limits<double>::quiet_NaN();
  std::int64_t hits = 0;
  /// NaiveMC Wilson interval (95%).
  double ci_lo = 0.0;
  double ci_hi = 1.0;
  /// Zero hits: p_hat is 0 and `upper_bound` is the one-sided 95% bound.
  bool zero_hits = false;
  double upper_bound = std::numeric_limits<double>::quiet_NaN();
  /// Exhaustive only: how the value was obtained.
  std::string certificate;
  /// eps -+ stderr(center) when the center's stderr is known.
  std::optional<std::pair<double, double>> eps_band;
};

LDEstimate estimate_ld_probability(const LDRequest& r);

/// Wilson score interval for hits / trials.
std::pair<double, double> wilson_interval(std::int64_t hits,
                                          std::int64_t trials,
                                          double z = 1.959963984540054);
/// One-sided upper confidence bound for zero hits: 1 - alpha^{1/trials}.
double zero_hit_upper_bound(std::int64_t trials, double alpha = 0.05);

/// Runs a pilot of `pilot_replicas` per candidate (seed stream disjoint from
/// the main run), keeps the candidate with the largest effective sample size
/// and then runs the full estimate with it.
struct TiltSearch {
  std::vector<double> strengths;
  std::vector<double> pilot_ess;
  std::size_t best = 0;
  LDEstimate estimate;
};
TiltSearch estimate_with_tilt_search(const LDRequest& base,
                                     const std::vector<TiltProposal>& candidates,
                                     std::int64_t pilot_replicas);

/// Mean shift -M 2^{N-k}/N on T_k for k <= min(N/2, N + log2 delta),
/// converted to tilts of `weights`. M = 0 gives the zero schedule.
TiltSchedule shell_tilt_schedule(int N, double delta, double M,
                                 const WeightModel& weights);

/// Exact sums over every discrete field (Model 1 cone of level n, discrete
/// weights, Kind::Schedule tilt): the event probability, and the mean of the
/// TiltedIS estimator, sum_w Q(w) 1_A(w) exp(LLR(w)).
struct IsEnumeration {
  double exact = 0.0;
  double is_mean = 0.0;
  std::int64_t fields = 0;
};
IsEnumeration is_mean_by_enumeration(const LDRequest& r);

// ---- rate forms ----------------------------------------------------------

struct RateForm {
  std::string name;
  double c = 0.0;
  double residual = 0.0;
};

struct RateFit {
  int d = 1;
  std::vector<RateForm> forms;
  std::size_t selected = 0;
  const RateForm& best() const { return forms.at(selected); }
};

/// Forms c n, c n^2/log n, c n^2 and c n^{d+1} (omitted when equal to n^2)
/// fitted to y = -log p by least squares in log space:
/// log y = log c + log g(n). Points are (n, log p_hat).
RateFit fit_rate(const std::vector<std::pair<int, double>>& points, int d);

// ---- serialization -------------------------------------------------------

inline constexpr int kEstimateSchemaVersion = 1;
std::vector<std::string> ld_csv_header();
std::vector<std::string> ld_csv_row(const LDEstimate& e);
nlohmann::json to_json(const LDEstimate& e);
nlohmann::json to_json(const TimeConstantEstimate& e);
nlohmann::json to_json(const RateFit& f);

/// Shortest round-trip decimal form of a double ("inf", "-inf", "nan").
std::string format_number(double x);

}  // namespace ldp
