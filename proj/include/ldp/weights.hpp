#pragma once

// Edge-weight laws, seed-addressed field sampling and exponential tilting.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ldp/lattice.hpp"

namespace ldp {

class WeightError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---- tail-shape functions f ----------------------------------------------

/// f(x) = alpha, alpha * x^a, or alpha * (log2 x)^b.
struct FSpec {
  enum class Family { Constant, Power, LogPower };
  Family family = Family::Constant;
  double alpha = 1.0;
  double exponent = 0.0;  // a for Power, b for LogPower

  static FSpec constant(double alpha);
  static FSpec power(double alpha, double a);
  static FSpec log_power(double alpha, double b);
  /// The standard normal lower tail has -ln P(X < -x) / x^2 -> 1/2, so its
  /// shape function is bounded; this is the constant family with alpha 1/2.
  static FSpec gaussian_equivalent();

  double operator()(double x) const;
  /// Throws unless f is positive and nondecreasing on [x0, inf).
  void validate(double x0) const;

  std::string describe() const;
  /// Inverse of describe(): "constant(a)", "power(a,x)" or "logpower(a,x)".
  static FSpec parse(const std::string& s);

  friend bool operator==(const FSpec&, const FSpec&) = default;
};

// ---- laws ----------------------------------------------------------------

/// Which tail of a TailFamily law carries the prescribed shape.
///   Lower (Model 1): ln P(X < -x) = -x^{d+1} f(x) for x >= M0, mean zero.
///   Upper (Model 2): ln P(t > x) = -x^d f(x) for x >= M0, support [0, inf).
enum class TailSide { Lower, Upper };

struct GaussianLaw {
  double mean = 0.0;
  double sd = 1.0;
};

struct DiscreteLaw {
  std::vector<double> values;
  std::vector<double> probs;
};

struct TailFamilyLaw {
  int d = 1;
  FSpec f;
  double m0 = 1.0;
  TailSide side = TailSide::Lower;
};

/// Law of a single edge weight.
class WeightModel {
 public:
  enum class Kind { Gaussian, Discrete, TailFamily };

  static WeightModel gaussian(double mean, double sd);
  static WeightModel discrete(std::vector<double> values,
                              std::vector<double> probs);
  static WeightModel tail_family(int d, FSpec f, double m0, TailSide side);

  Kind kind() const { return kind_; }
  const GaussianLaw& gaussian_law() const { return gaussian_; }
  const DiscreteLaw& discrete_law() const { return discrete_; }
  const TailFamilyLaw& tail_law() const { return tail_; }

  /// Global exponential tilt; |theta| must lie inside the MGF domain.
  std::optional<double> tilt() const { return tilt_; }
  WeightModel with_tilt(std::optional<double> theta) const;
  /// Additive offset applied after sampling.
  double shift() const { return shift_; }
  WeightModel with_shift(double s) const;

  /// Supremum c0 of |theta| for which E[exp(theta X)] is finite, per sign.
  /// Infinity for bounded and super-exponential laws.
  double mgf_limit_positive() const;
  double mgf_limit_negative() const;
  bool in_mgf_domain(double theta) const;

  double mean() const;
  double support_min() const;
  double support_max() const;
  bool nonnegative() const { return support_min() >= 0.0; }

  /// Natural-log MGF ln E[exp(theta X)] of the untilted law.
  double log_mgf(double theta) const;
  /// Mean of the law tilted by theta.
  double tilted_mean(double theta) const;
  /// theta with tilted_mean(theta) = mean() + shift.
  double theta_for_mean_shift(double shift) const;

  /// Quantile of the law tilted by theta.
  double quantile(double u, double theta = 0.0) const;
  /// P(X <= x) under the untilted law.
  double cdf(double x) const;

  /// TailFamily only: the probability mass beyond M0 and the upper end of the
  /// uniform core (Lower side).
  double tail_mass() const { return q_; }
  double core_upper() const { return core_hi_; }

  /// Stable textual form, e.g. "gaussian(0,1)".
  std::string describe() const;
  /// Inverse of describe().
  static WeightModel parse(const std::string& s);

  friend bool operator==(const WeightModel& a, const WeightModel& b);

 private:
  double tail_survival(double s) const;  // TailFamily: exp(-g(s))
  double tail_g(double s) const;         // s^p f(s)
  int tail_power() const;
  double tilted_tail_lower(double s, double theta) const;
  double tilted_tail_upper(double s, double theta) const;
  double tilted_core(double theta) const;
  double base_quantile(double u, double theta) const;

  Kind kind_ = Kind::Gaussian;
  GaussianLaw gaussian_;
  DiscreteLaw discrete_;
  TailFamilyLaw tail_;
  std::optional<double> tilt_;
  double shift_ = 0.0;
  // TailFamily splice constants.
  double q_ = 0.0;
  double core_hi_ = 0.0;
};

// ---- tilt schedules ------------------------------------------------------

/// Per-edge tilt parameters. A schedule assigns theta_k to the M1 cone edges
/// of shell T_k; edges outside every listed shell get `base`.
struct TiltSchedule {
  double base = 0.0;
  std::vector<double> shell_theta;

  static TiltSchedule uniform(double theta);
  bool is_zero() const;
  double theta(EdgeId id) const;
};

// ---- fields --------------------------------------------------------------

/// Read-only access to a realisation of edge weights.
class EdgeField {
 public:
  virtual ~EdgeField() = default;
  virtual Model model() const = 0;
  virtual int d() const = 0;
  virtual const Window& window() const = 0;
  /// Throws WeightError for edges outside the window.
  virtual double weight(EdgeId id) const = 0;

  double weight(const Edge& e) const { return weight(e.id); }
};

/// Seed-addressed sample: weight(e) = F_theta(e)^{-1}(u(seed, id(e))).
class FieldSample final : public EdgeField {
 public:
  FieldSample(std::uint64_t seed, Window window, WeightModel model,
              std::optional<TiltSchedule> schedule = std::nullopt);

  Model model() const override { return window_.model; }
  int d() const override { return window_.d(); }
  const Window& window() const override { return window_; }
  double weight(EdgeId id) const override;
  using EdgeField::weight;

  std::uint64_t seed() const { return seed_; }
  const WeightModel& weight_model() const { return model_; }
  /// Tilt actually applied to an edge (schedule, else model tilt, else 0).
  double theta(EdgeId id) const;
  bool tilted() const;

 private:
  std::uint64_t seed_;
  Window window_;
  WeightModel model_;
  std::optional<TiltSchedule> schedule_;
};

/// Explicit weights. Missing edges inside the window take `fallback` when
/// set, otherwise lookup throws.
class TableField final : public EdgeField {
 public:
  TableField(Window window, std::optional<double> fallback = std::nullopt);

  Model model() const override { return window_.model; }
  int d() const override { return window_.d(); }
  const Window& window() const override { return window_; }
  double weight(EdgeId id) const override;
  using EdgeField::weight;

  void set(EdgeId id, double w) { table_[id] = w; }
  void set(const Edge& e, double w) { table_[e.id] = w; }
  const std::map<EdgeId, double>& entries() const { return table_; }

 private:
  Window window_;
  std::optional<double> fallback_;
  std::map<EdgeId, double> table_;
};

/// Seed of replica `replica` derived from a base seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t replica);

/// Uniform variate used for edge `id` under `seed`.
double edge_uniform(std::uint64_t seed, EdgeId id);

// ---- operations ----------------------------------------------------------

double sample_weight(const FieldSample& field, const Edge& e);

/// sum_e [ -theta X_e + ln M(theta) ] (natural log); zero for theta = 0.
double log_likelihood_ratio(const FieldSample& field,
                            std::span<const Edge> edges, double theta);

/// Likelihood ratio dP/dQ in log form using the field's own per-edge tilts.
double log_likelihood_ratio(const FieldSample& field,
                            std::span<const Edge> edges);

/// sum over edges of X_e^- 1{X_e^- > M}; M = 0 gives the plain negative mass.
double negative_part_mass(const EdgeField& field, std::span<const Edge> edges,
                          double truncation = 0.0);

// ---- summability ---------------------------------------------------------

enum class Summability { Convergent, Divergent };
std::string to_string(Summability s);

/// Which criterion: terms 1/f(2^n)^{1/d} (lower tail of Model 1) or
/// 1/f(2^n)^{1/(d-1)} (upper tail of Model 2).
enum class SummabilityForm { LowerTailM1, UpperTailM2 };

struct SummabilityReport {
  Summability verdict = Summability::Divergent;
  double exponent = 1.0;  // 1/d or 1/(d-1)
  std::vector<double> partial_sums;  // S_1..S_{n_max}
  /// Upper bound on sum_{n > n_max} of the terms (convergent only).
  double remainder_bound = 0.0;
  std::string reason;
};

SummabilityReport summability_classify(const FSpec& f, int d, int n_max,
                                       SummabilityForm form =
                                           SummabilityForm::LowerTailM1);

}  // namespace ldp
