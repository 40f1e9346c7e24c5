#include "ldp/weights.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/roots.hpp>

#include "ldp/philox.hpp"

namespace ldp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kLn2 = 0.69314718055994530942;

std::string fmt_double(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

// Solves h(s) = 0 for increasing h on [lo, inf) by doubling then TOMS 748.
template <class F>
double solve_increasing(F h, double lo) {
  double hi = std::max(2.0 * lo, lo + 1.0);
  double h_lo = h(lo);
  if (h_lo >= 0) return lo;
  int guard = 0;
  while (h(hi) < 0) {
    lo = hi;
    hi *= 2.0;
    if (++guard > 200) throw WeightError("root bracket search diverged");
  }
  std::uintmax_t iters = 200;
  auto [a, b] = boost::math::tools::toms748_solve(
      h, lo, hi, boost::math::tools::eps_tolerance<double>(50), iters);
  return 0.5 * (a + b);
}

template <class F>
double integrate_to_inf(F f, double from) {
  return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
      f, from, kInf, 15, 1e-13);
}

double log_sum_exp(const std::vector<double>& xs) {
  double m = -kInf;
  for (double x : xs) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

}  // namespace

// ---- FSpec ---------------------------------------------------------------

FSpec FSpec::constant(double alpha) { return {Family::Constant, alpha, 0.0}; }
FSpec FSpec::power(double alpha, double a) { return {Family::Power, alpha, a}; }
FSpec FSpec::log_power(double alpha, double b) {
  return {Family::LogPower, alpha, b};
}
FSpec FSpec::gaussian_equivalent() { return constant(0.5); }

double FSpec::operator()(double x) const {
  switch (family) {
    case Family::Constant:
      return alpha;
    case Family::Power:
      return alpha * std::pow(x, exponent);
    case Family::LogPower:
      return alpha * std::pow(std::log2(x), exponent);
  }
  return alpha;
}

void FSpec::validate(double x0) const {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) {
    throw WeightError("f: alpha must be positive, got " + fmt_double(alpha));
  }
  if (family != Family::Constant && !(exponent >= 0.0)) {
    throw WeightError("f must be nondecreasing: exponent must be >= 0");
  }
  if (family == Family::LogPower && exponent > 0.0 && !(x0 > 1.0)) {
    throw WeightError("f = alpha (log2 x)^b needs M0 > 1 to stay positive");
  }
  if (!((*this)(x0) > 0.0)) throw WeightError("f(M0) must be positive");
}

FSpec FSpec::parse(const std::string& s) {
  const auto open = s.find('(');
  if (open == std::string::npos || s.back() != ')')
    throw WeightError("cannot parse f spec '" + s + "'");
  const std::string head = s.substr(0, open);
  const std::string body = s.substr(open + 1, s.size() - open - 2);
  std::vector<double> args;
  std::istringstream in(body);
  for (std::string tok; std::getline(in, tok, ',');) {
    std::size_t used = 0;
    double x = 0.0;
    try {
      x = std::stod(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != tok.size())
      throw WeightError("bad number '" + tok + "' in f spec '" + s + "'");
    args.push_back(x);
  }
  if (head == "constant" && args.size() == 1) return constant(args[0]);
  if (head == "power" && args.size() == 2) return power(args[0], args[1]);
  if (head == "logpower" && args.size() == 2) return log_power(args[0], args[1]);
  throw WeightError("cannot parse f spec '" + s + "'");
}

std::string FSpec::describe() const {
  switch (family) {
    case Family::Constant:
      return "constant(" + fmt_double(alpha) + ")";
    case Family::Power:
      return "power(" + fmt_double(alpha) + "," + fmt_double(exponent) + ")";
    case Family::LogPower:
      return "logpower(" + fmt_double(alpha) + "," + fmt_double(exponent) +
             ")";
  }
  return "?";
}

// ---- WeightModel ---------------------------------------------------------

WeightModel WeightModel::gaussian(double mean, double sd) {
  if (!(sd > 0.0) || !std::isfinite(sd) || !std::isfinite(mean)) {
    throw WeightError("gaussian: sd must be positive and finite");
  }
  WeightModel m;
  m.kind_ = Kind::Gaussian;
  m.gaussian_ = {mean, sd};
  return m;
}

WeightModel WeightModel::discrete(std::vector<double> values,
                                  std::vector<double> probs) {
  if (values.empty() || values.size() != probs.size()) {
    throw WeightError("discrete: values and probs must be nonempty and equal "
                      "length");
  }
  double total = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0)) throw WeightError("discrete: negative probability");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    throw WeightError("discrete: probabilities sum to " + fmt_double(total));
  }
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](auto a, auto b) { return values[a] < values[b]; });
  WeightModel m;
  m.kind_ = Kind::Discrete;
  for (auto i : order) {
    if (!std::isfinite(values[i])) throw WeightError("discrete: bad value");
    m.discrete_.values.push_back(values[i]);
    m.discrete_.probs.push_back(probs[i]);
  }
  return m;
}

WeightModel WeightModel::tail_family(int d, FSpec f, double m0,
                                     TailSide side) {
  if (d < 1 || d > kMaxDim) throw WeightError("tail family: bad dimension");
  if (!(m0 > 0.0) || !std::isfinite(m0)) {
    throw WeightError("tail family: M0 must be positive");
  }
  f.validate(m0);
  WeightModel m;
  m.kind_ = Kind::TailFamily;
  m.tail_ = {d, f, m0, side};
  m.q_ = m.tail_survival(m0);
  if (!(m.q_ < 1.0)) throw WeightError("tail family: degenerate tail at M0");
  if (side == TailSide::Lower) {
    // Core uniform on [-M0, b] carrying mass 1 - q; b is chosen so that the
    // mean is exactly zero: (1 - q)(b - M0)/2 = E[X^-; X < -M0].
    const double integral =
        integrate_to_inf([&](double s) { return m.tail_survival(s); }, m0);
    const double negative_mass = m0 * m.q_ + integral;
    m.core_hi_ = m0 + 2.0 * negative_mass / (1.0 - m.q_);
  } else {
    m.core_hi_ = m0;
  }
  return m;
}

WeightModel WeightModel::with_tilt(std::optional<double> theta) const {
  if (theta && !in_mgf_domain(*theta)) {
    throw WeightError("tilt " + fmt_double(*theta) +
                      " outside the MGF domain of " + describe());
  }
  WeightModel m = *this;
  m.tilt_ = theta;
  return m;
}

WeightModel WeightModel::with_shift(double s) const {
  WeightModel m = *this;
  m.shift_ = s;
  return m;
}

int WeightModel::tail_power() const {
  return tail_.side == TailSide::Lower ? tail_.d + 1 : tail_.d;
}

double WeightModel::tail_g(double s) const {
  return std::pow(s, tail_power()) * tail_.f(s);
}

double WeightModel::tail_survival(double s) const {
  return std::exp(-tail_g(s));
}

double WeightModel::mgf_limit_positive() const {
  if (kind_ != Kind::TailFamily || tail_.side == TailSide::Lower) return kInf;
  // Upper side: exp(-x f(x)) tails are exponential only for d = 1 and
  // constant f.
  const bool flat = tail_.f.family == FSpec::Family::Constant ||
                    tail_.f.exponent == 0.0;
  return (tail_.d == 1 && flat) ? tail_.f.alpha : kInf;
}

double WeightModel::mgf_limit_negative() const { return kInf; }

bool WeightModel::in_mgf_domain(double theta) const {
  if (!std::isfinite(theta)) return false;
  return theta >= 0 ? theta < mgf_limit_positive()
                    : -theta < mgf_limit_negative();
}

double WeightModel::mean() const {
  switch (kind_) {
    case Kind::Gaussian:
      return gaussian_.mean + shift_;
    case Kind::Discrete: {
      double s = 0.0;
      for (std::size_t i = 0; i < discrete_.values.size(); ++i) {
        s += discrete_.values[i] * discrete_.probs[i];
      }
      return s + shift_;
    }
    case Kind::TailFamily:
      if (tail_.side == TailSide::Lower) return shift_;
      return shift_ + (1.0 - q_) * tail_.m0 / 2.0 + tail_.m0 * q_ +
             integrate_to_inf([&](double s) { return tail_survival(s); },
                              tail_.m0);
  }
  return 0.0;
}

double WeightModel::support_min() const {
  switch (kind_) {
    case Kind::Gaussian:
      return -kInf;
    case Kind::Discrete: {
      for (std::size_t i = 0; i < discrete_.values.size(); ++i) {
        if (discrete_.probs[i] > 0) return discrete_.values[i] + shift_;
      }
      return shift_;
    }
    case Kind::TailFamily:
      return tail_.side == TailSide::Lower ? -kInf : shift_;
  }
  return -kInf;
}

double WeightModel::support_max() const {
  switch (kind_) {
    case Kind::Gaussian:
      return kInf;
    case Kind::Discrete: {
      for (std::size_t i = discrete_.values.size(); i-- > 0;) {
        if (discrete_.probs[i] > 0) return discrete_.values[i] + shift_;
      }
      return shift_;
    }
    case Kind::TailFamily:
      return tail_.side == TailSide::Lower ? core_hi_ + shift_ : kInf;
  }
  return kInf;
}

namespace {

// ln g'(s) for g(s) = s^p f(s).
double log_g_prime(const FSpec& f, int p, double s) {
  double fp = 0.0;
  switch (f.family) {
    case FSpec::Family::Constant:
      break;
    case FSpec::Family::Power:
      fp = f.alpha * f.exponent * std::pow(s, f.exponent - 1.0);
      break;
    case FSpec::Family::LogPower:
      if (f.exponent > 0) {
        fp = f.alpha * f.exponent * std::pow(std::log2(s), f.exponent - 1.0) /
             (s * kLn2);
      }
      break;
  }
  const double gp = p * std::pow(s, p - 1) * f(s) + std::pow(s, p) * fp;
  return std::log(gp);
}

}  // namespace

// E[exp(theta Y); Y < -s] for the Lower-side base variable Y, s >= M0.
double WeightModel::tilted_tail_lower(double s, double theta) const {
  const int p = tail_power();
  return integrate_to_inf(
      [&](double t) {
        return std::exp(-theta * t - tail_g(t) + log_g_prime(tail_.f, p, t));
      },
      s);
}

// E[exp(theta Y); Y > s] for the Upper-side base variable Y, s >= M0.
double WeightModel::tilted_tail_upper(double s, double theta) const {
  const int p = tail_power();
  return integrate_to_inf(
      [&](double t) {
        return std::exp(theta * t - tail_g(t) + log_g_prime(tail_.f, p, t));
      },
      s);
}

// E[exp(theta Y); Y in core].
double WeightModel::tilted_core(double theta) const {
  const double lo = tail_.side == TailSide::Lower ? -tail_.m0 : 0.0;
  const double hi = core_hi_;
  if (theta == 0.0) return 1.0 - q_;
  return (1.0 - q_) * (std::exp(theta * hi) - std::exp(theta * lo)) /
         (theta * (hi - lo));
}

double WeightModel::log_mgf(double theta) const {
  if (theta == 0.0) return 0.0;
  if (!in_mgf_domain(theta)) {
    throw WeightError("theta " + fmt_double(theta) + " outside MGF domain");
  }
  double base = 0.0;
  switch (kind_) {
    case Kind::Gaussian:
      base = theta * gaussian_.mean +
             0.5 * theta * theta * gaussian_.sd * gaussian_.sd;
      break;
    case Kind::Discrete: {
      std::vector<double> terms;
      for (std::size_t i = 0; i < discrete_.values.size(); ++i) {
        if (discrete_.probs[i] > 0) {
          terms.push_back(std::log(discrete_.probs[i]) +
                          theta * discrete_.values[i]);
        }
      }
      base = log_sum_exp(terms);
      break;
    }
    case Kind::TailFamily: {
      const double tail = tail_.side == TailSide::Lower
                              ? tilted_tail_lower(tail_.m0, theta)
                              : tilted_tail_upper(tail_.m0, theta);
      base = std::log(tail + tilted_core(theta));
      break;
    }
  }
  return base + theta * shift_;
}

double WeightModel::tilted_mean(double theta) const {
  switch (kind_) {
    case Kind::Gaussian:
      return gaussian_.mean + theta * gaussian_.sd * gaussian_.sd + shift_;
    case Kind::Discrete: {
      std::vector<double> lw;
      for (std::size_t i = 0; i < discrete_.values.size(); ++i) {
        lw.push_back(discrete_.probs[i] > 0
                         ? std::log(discrete_.probs[i]) +
                               theta * discrete_.values[i]
                         : -kInf);
      }
      const double norm = log_sum_exp(lw);
      double m = 0.0;
      for (std::size_t i = 0; i < lw.size(); ++i) {
        m += discrete_.values[i] * std::exp(lw[i] - norm);
      }
      return m + shift_;
    }
    case Kind::TailFamily: {
      if (theta == 0.0) return mean();
      const double h = 1e-4 * std::max(1.0, std::abs(theta));
      return (log_mgf(theta + h) - log_mgf(theta - h)) / (2.0 * h);
    }
  }
  return 0.0;
}

double WeightModel::theta_for_mean_shift(double shift) const {
  if (shift == 0.0) return 0.0;
  const double target = mean() + shift;
  if (!(target > support_min() && target < support_max())) {
    throw WeightError("mean shift " + fmt_double(shift) +
                      " leaves the support of " + describe());
  }
  if (kind_ == Kind::Gaussian) {
    return shift / (gaussian_.sd * gaussian_.sd);
  }
  // tilted_mean is increasing in theta; bracket on the side of the shift.
  const double dir = shift > 0 ? 1.0 : -1.0;
  const double limit = dir > 0 ? mgf_limit_positive() : mgf_limit_negative();
  auto h = [&](double t) { return dir * (tilted_mean(dir * t) - target); };
  double hi = std::min(1.0, 0.5 * limit);
  int guard = 0;
  while (h(hi) < 0) {
    hi = std::isfinite(limit) ? 0.5 * (hi + limit) : 2.0 * hi;
    if (++guard > 200) throw WeightError("mean shift unreachable");
  }
  std::uintmax_t iters = 200;
  auto [a, b] = boost::math::tools::toms748_solve(
      h, 0.0, hi, boost::math::tools::eps_tolerance<double>(48), iters);
  return dir * 0.5 * (a + b);
}

double WeightModel::cdf(double x) const {
  x -= shift_;
  switch (kind_) {
    case Kind::Gaussian:
      return boost::math::cdf(
          boost::math::normal_distribution<double>(gaussian_.mean,
                                                   gaussian_.sd),
          x);
    case Kind::Discrete: {
      double c = 0.0;
      for (std::size_t i = 0; i < discrete_.values.size(); ++i) {
        if (discrete_.values[i] <= x) c += discrete_.probs[i];
      }
      return std::min(c, 1.0);
    }
    case Kind::TailFamily: {
      const double m0 = tail_.m0;
      if (tail_.side == TailSide::Lower) {
        if (x < -m0) return tail_survival(-x);
        if (x <= core_hi_) return q_ + (1.0 - q_) * (x + m0) / (core_hi_ + m0);
        return 1.0;
      }
      if (x < 0) return 0.0;
      if (x <= m0) return (1.0 - q_) * x / m0;
      return 1.0 - tail_survival(x);
    }
  }
  return 0.0;
}

double WeightModel::base_quantile(double u, double theta) const {
  switch (kind_) {
    case Kind::Gaussian: {
      const double mu = gaussian_.mean + theta * gaussian_.sd * gaussian_.sd;
      return boost::math::quantile(
          boost::math::normal_distribution<double>(mu, gaussian_.sd), u);
    }
    case Kind::Discrete: {
      const auto& v = discrete_.values;
      const auto& p = discrete_.probs;
      std::vector<double> w(v.size());
      if (theta == 0.0) {
        w = p;
      } else {
        std::vector<double> lw(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) {
          lw[i] = p[i] > 0 ? std::log(p[i]) + theta * v[i] : -kInf;
        }
        const double norm = log_sum_exp(lw);
        for (std::size_t i = 0; i < v.size(); ++i) {
          w[i] = std::exp(lw[i] - norm);
        }
      }
      double c = 0.0;
      for (std::size_t i = 0; i < v.size(); ++i) {
        c += w[i];
        if (u < c && w[i] > 0) return v[i];
      }
      for (std::size_t i = v.size(); i-- > 0;) {
        if (w[i] > 0) return v[i];
      }
      return v.back();
    }
    case Kind::TailFamily:
      break;
  }

  const double m0 = tail_.m0;
  if (tail_.side == TailSide::Lower) {
    if (theta == 0.0) {
      if (u < q_) {
        const double target = -std::log(u);
        return -solve_increasing([&](double s) { return tail_g(s) - target; },
                                 m0);
      }
      return -m0 + (u - q_) / (1.0 - q_) * (core_hi_ + m0);
    }
    const double tail = tilted_tail_lower(m0, theta);
    const double mgf = tail + tilted_core(theta);
    const double tau = tail / mgf;
    if (u < tau) {
      const double target = std::log(u * mgf);
      return -solve_increasing(
          [&](double s) {
            return target - std::log(tilted_tail_lower(s, theta));
          },
          m0);
    }
    const double span = core_hi_ + m0;
    const double e = std::exp(-theta * m0) +
                     (u - tau) * mgf * theta * span / (1.0 - q_);
    return std::clamp(std::log(e) / theta, -m0, core_hi_);
  }

  // Upper side.
  if (theta == 0.0) {
    if (u <= 1.0 - q_) return u * m0 / (1.0 - q_);
    const double target = -std::log1p(-u);
    return solve_increasing([&](double s) { return tail_g(s) - target; }, m0);
  }
  const double core = tilted_core(theta);
  const double mgf = core + tilted_tail_upper(m0, theta);
  const double kappa = core / mgf;
  if (u <= kappa) {
    const double e = 1.0 + u * mgf * theta * m0 / (1.0 - q_);
    return std::clamp(std::log(e) / theta, 0.0, m0);
  }
  const double target = std::log((1.0 - u) * mgf);
  return solve_increasing(
      [&](double s) { return target - std::log(tilted_tail_upper(s, theta)); },
      m0);
}

double WeightModel::quantile(double u, double theta) const {
  if (!(u > 0.0 && u < 1.0)) throw WeightError("quantile: u must be in (0,1)");
  if (theta != 0.0 && !in_mgf_domain(theta)) {
    throw WeightError("theta outside MGF domain");
  }
  return base_quantile(u, theta) + shift_;
}

std::string WeightModel::describe() const {
  std::string s;
  switch (kind_) {
    case Kind::Gaussian:
      s = "gaussian(" + fmt_double(gaussian_.mean) + "," +
          fmt_double(gaussian_.sd) + ")";
      break;
    case Kind::Discrete: {
      s = "discrete(";
      for (std::size_t i = 0; i < discrete_.values.size(); ++i) {
        s += (i ? ";" : "") + fmt_double(discrete_.values[i]) + ":" +
             fmt_double(discrete_.probs[i]);
      }
      s += ")";
      break;
    }
    case Kind::TailFamily:
      s = "tail(d=" + std::to_string(tail_.d) + "," + tail_.f.describe() +
          ",M0=" + fmt_double(tail_.m0) + "," +
          (tail_.side == TailSide::Lower ? "lower" : "upper") + ")";
      break;
  }
  if (tilt_) s += "@tilt=" + fmt_double(*tilt_);
  if (shift_ != 0.0) s += "+" + fmt_double(shift_);
  return s;
}

namespace {

double parse_number(const std::string& tok, const std::string& whole) {
  std::size_t used = 0;
  double x = 0.0;
  try {
    x = std::stod(tok, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != tok.size())
    throw WeightError("bad number '" + tok + "' in law '" + whole + "'");
  return x;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string tok; std::getline(in, tok, sep);) out.push_back(tok);
  return out;
}

}  // namespace

WeightModel WeightModel::parse(const std::string& s) {
  const auto open = s.find('(');
  const auto close = s.rfind(')');
  if (open == std::string::npos || close == std::string::npos || close < open)
    throw WeightError("cannot parse law '" + s + "'");
  const std::string head = s.substr(0, open);
  const std::string body = s.substr(open + 1, close - open - 1);
  std::string suffix = s.substr(close + 1);

  WeightModel m;
  if (head == "gaussian") {
    const auto args = split(body, ',');
    if (args.size() != 2) throw WeightError("gaussian takes (mean,sd): '" + s + "'");
    m = gaussian(parse_number(args[0], s), parse_number(args[1], s));
  } else if (head == "discrete") {
    std::vector<double> values, probs;
    for (const std::string& atom : split(body, ';')) {
      const auto colon = atom.find(':');
      if (colon == std::string::npos)
        throw WeightError("discrete atoms are value:prob in '" + s + "'");
      values.push_back(parse_number(atom.substr(0, colon), s));
      probs.push_back(parse_number(atom.substr(colon + 1), s));
    }
    m = discrete(std::move(values), std::move(probs));
  } else if (head == "tail") {
    // tail(d=<int>,<f>,M0=<x>,lower|upper); f itself contains commas.
    const auto first = body.find(',');
    const auto last = body.rfind(',');
    const auto mid = last == std::string::npos ? last : body.rfind(',', last - 1);
    if (first == std::string::npos || mid == std::string::npos || mid <= first ||
        body.compare(0, 2, "d=") != 0 || body.compare(mid + 1, 3, "M0=") != 0)
      throw WeightError("tail takes (d=..,f,M0=..,side): '" + s + "'");
    const int d = static_cast<int>(parse_number(body.substr(2, first - 2), s));
    const FSpec f = FSpec::parse(body.substr(first + 1, mid - first - 1));
    const double m0 = parse_number(body.substr(mid + 4, last - mid - 4), s);
    const std::string side = body.substr(last + 1);
    if (side != "lower" && side != "upper")
      throw WeightError("tail side must be lower or upper: '" + s + "'");
    m = tail_family(d, f, m0, side == "lower" ? TailSide::Lower : TailSide::Upper);
  } else {
    throw WeightError("unknown law '" + s + "'");
  }
  if (suffix.rfind("@tilt=", 0) == 0) {
    suffix.erase(0, 6);
    std::size_t used = 0;
    double t = 0.0;
    try {
      t = std::stod(suffix, &used);
    } catch (const std::exception&) {
      throw WeightError("bad tilt in law '" + s + "'");
    }
    m = m.with_tilt(t);
    suffix.erase(0, used);
  }
  if (!suffix.empty()) {
    if (suffix[0] != '+') throw WeightError("trailing text in law '" + s + "'");
    m = m.with_shift(parse_number(suffix.substr(1), s));
  }
  return m;
}

bool operator==(const WeightModel& a, const WeightModel& b) {
  if (a.kind_ != b.kind_ || a.tilt_ != b.tilt_ || a.shift_ != b.shift_) {
    return false;
  }
  switch (a.kind_) {
    case WeightModel::Kind::Gaussian:
      return a.gaussian_.mean == b.gaussian_.mean &&
             a.gaussian_.sd == b.gaussian_.sd;
    case WeightModel::Kind::Discrete:
      return a.discrete_.values == b.discrete_.values &&
             a.discrete_.probs == b.discrete_.probs;
    case WeightModel::Kind::TailFamily:
      return a.tail_.d == b.tail_.d && a.tail_.f.family == b.tail_.f.family &&
             a.tail_.f.alpha == b.tail_.f.alpha &&
             a.tail_.f.exponent == b.tail_.f.exponent &&
             a.tail_.m0 == b.tail_.m0 && a.tail_.side == b.tail_.side;
  }
  return false;
}

// ---- tilt schedules ------------------------------------------------------

TiltSchedule TiltSchedule::uniform(double theta) { return {theta, {}}; }

bool TiltSchedule::is_zero() const {
  return base == 0.0 &&
         std::all_of(shell_theta.begin(), shell_theta.end(),
                     [](double t) { return t == 0.0; });
}

double TiltSchedule::theta(EdgeId id) const {
  if (shell_theta.empty() || (id >> 62) != static_cast<EdgeId>(Model::M1)) {
    return base;
  }
  const DecodedM1 e = decode_m1(id);
  const int l1 = e.x.l1();
  if (l1 > e.level || ((l1 + e.level) & 1)) return base;
  const auto k = static_cast<std::size_t>(shell_of_level(e.level));
  return k < shell_theta.size() ? shell_theta[k] : base;
}

// ---- fields --------------------------------------------------------------

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t replica) {
  return philox::bits64(base, replica, 0x5EED5EED5EED5EEDull);
}

double edge_uniform(std::uint64_t seed, EdgeId id) {
  return philox::uniform_open(seed, id, 0);
}

FieldSample::FieldSample(std::uint64_t seed, Window window, WeightModel model,
                         std::optional<TiltSchedule> schedule)
    : seed_(seed),
      window_(std::move(window)),
      model_(std::move(model)),
      schedule_(std::move(schedule)) {
  if (window_.model == Model::M2 && model_.support_min() < 0.0) {
    throw WeightError("Model 2 passage times need nonnegative support; " +
                      model_.describe() + " is not");
  }
  if (schedule_) {
    for (double t : schedule_->shell_theta) {
      if (t != 0.0 && !model_.in_mgf_domain(t)) {
        throw WeightError("tilt schedule leaves the MGF domain");
      }
    }
    if (schedule_->base != 0.0 && !model_.in_mgf_domain(schedule_->base)) {
      throw WeightError("tilt schedule leaves the MGF domain");
    }
  }
}

double FieldSample::theta(EdgeId id) const {
  if (schedule_) return schedule_->theta(id);
  return model_.tilt().value_or(0.0);
}

bool FieldSample::tilted() const {
  if (schedule_) return !schedule_->is_zero();
  return model_.tilt().value_or(0.0) != 0.0;
}

double FieldSample::weight(EdgeId id) const {
  if (!window_.contains(id)) {
    throw WeightError("edge " + std::to_string(id) + " outside field window");
  }
  return model_.quantile(edge_uniform(seed_, id), theta(id));
}

TableField::TableField(Window window, std::optional<double> fallback)
    : window_(std::move(window)), fallback_(fallback) {}

double TableField::weight(EdgeId id) const {
  if (auto it = table_.find(id); it != table_.end()) return it->second;
  if (!window_.contains(id)) {
    throw WeightError("edge " + std::to_string(id) + " outside field window");
  }
  if (fallback_) return *fallback_;
  throw WeightError("edge " + std::to_string(id) + " has no weight");
}

// ---- operations ----------------------------------------------------------

double sample_weight(const FieldSample& field, const Edge& e) {
  return field.weight(e.id);
}

double log_likelihood_ratio(const FieldSample& field,
                            std::span<const Edge> edges, double theta) {
  if (theta == 0.0) return 0.0;
  const WeightModel& m = field.weight_model();
  if (!m.in_mgf_domain(theta)) {
    throw WeightError("theta " + fmt_double(theta) + " outside MGF domain");
  }
  const double log_m = m.log_mgf(theta);
  double s = 0.0;
  for (const Edge& e : edges) s += -theta * field.weight(e.id) + log_m;
  return s;
}

double log_likelihood_ratio(const FieldSample& field,
                            std::span<const Edge> edges) {
  const WeightModel& m = field.weight_model();
  std::map<double, double> log_m_cache;
  double s = 0.0;
  for (const Edge& e : edges) {
    const double theta = field.theta(e.id);
    if (theta == 0.0) continue;
    auto it = log_m_cache.find(theta);
    if (it == log_m_cache.end()) {
      it = log_m_cache.emplace(theta, m.log_mgf(theta)).first;
    }
    s += -theta * field.weight(e.id) + it->second;
  }
  return s;
}

double negative_part_mass(const EdgeField& field, std::span<const Edge> edges,
                          double truncation) {
  if (!(truncation >= 0.0)) throw WeightError("truncation must be >= 0");
  double s = 0.0;
  for (const Edge& e : edges) {
    const double neg = std::max(0.0, -field.weight(e.id));
    if (neg > truncation) s += neg;
  }
  return s;
}

// ---- summability ---------------------------------------------------------

std::string to_string(Summability s) {
  return s == Summability::Convergent ? "Convergent" : "Divergent";
}

SummabilityReport summability_classify(const FSpec& f, int d, int n_max,
                                       SummabilityForm form) {
  if (n_max < 1) throw WeightError("n_max must be >= 1");
  int p = 0;
  if (form == SummabilityForm::LowerTailM1) {
    if (d < 1) throw WeightError("lower-tail criterion needs d >= 1");
    p = d;
  } else {
    if (d < 2) throw WeightError("upper-tail criterion needs d >= 2");
    p = d - 1;
  }
  if (!(f.alpha > 0.0)) throw WeightError("f: alpha must be positive");
  if (f.family != FSpec::Family::Constant && !(f.exponent >= 0.0)) {
    throw WeightError("unsupported family shape: negative exponent");
  }

  SummabilityReport r;
  r.exponent = 1.0 / p;
  const double e = r.exponent;
  const double scale = std::pow(f.alpha, -e);
  // ln of the n-th term 1/f(2^n)^{1/p}, without forming 2^n.
  auto log_term = [&](int n) {
    switch (f.family) {
      case FSpec::Family::Constant:
        return std::log(scale);
      case FSpec::Family::Power:
        return std::log(scale) - e * f.exponent * n * kLn2;
      case FSpec::Family::LogPower:
        return std::log(scale) - e * f.exponent * std::log(double(n));
    }
    return 0.0;
  };
  r.partial_sums.reserve(static_cast<std::size_t>(n_max));
  double s = 0.0;
  for (int n = 1; n <= n_max; ++n) {
    s += std::exp(log_term(n));
    r.partial_sums.push_back(s);
  }

  switch (f.family) {
    case FSpec::Family::Constant:
      r.verdict = Summability::Divergent;
      r.reason = "constant terms";
      break;
    case FSpec::Family::Power:
      if (f.exponent > 0) {
        const double ratio = std::exp2(-e * f.exponent);
        r.verdict = Summability::Convergent;
        r.reason = "geometric series, ratio " + fmt_double(ratio);
        r.remainder_bound = scale * std::pow(ratio, n_max + 1) / (1.0 - ratio);
      } else {
        r.verdict = Summability::Divergent;
        r.reason = "constant terms";
      }
      break;
    case FSpec::Family::LogPower: {
      const double sexp = e * f.exponent;
      if (sexp > 1.0) {
        r.verdict = Summability::Convergent;
        r.reason = "p-series with p = " + fmt_double(sexp);
        r.remainder_bound = scale * std::pow(double(n_max), 1.0 - sexp) /
                            (sexp - 1.0);
      } else {
        r.verdict = Summability::Divergent;
        r.reason = "p-series with p = " + fmt_double(sexp) + " <= 1";
      }
      break;
    }
  }
  return r;
}

}  // namespace ldp
