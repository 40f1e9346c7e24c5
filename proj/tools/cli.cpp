#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <json.hpp>

#include "ldp/constructions.hpp"
#include "ldp/lattice.hpp"
#include "ldp/passage.hpp"

namespace ldp::cli {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr const char* kToolVersion = "1.0.0";
constexpr int kManifestSchema = 1;

// ---- names ---------------------------------------------------------------

namespace {

const std::vector<std::pair<Command, std::string>>& command_names() {
  static const std::vector<std::pair<Command, std::string>> names = {
      {Command::EstimateConstant, "estimate-constant"},
      {Command::LdCurve, "ld-curve"},
      {Command::FitRate, "fit-rate"},
      {Command::CheckSummability, "check-summability"},
      {Command::DetectEvent, "detect-event"},
      {Command::VerifyShellBound, "verify-shell-bound"},
      {Command::OracleCrosscheck, "oracle-crosscheck"},
      {Command::EmitPlotData, "emit-plot-data"},
  };
  return names;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  if (s.empty()) return out;
  std::istringstream in(s);
  for (std::string tok; std::getline(in, tok, sep);) out.push_back(trim(tok));
  if (s.back() == sep) out.push_back("");
  return out;
}

}  // namespace

std::string to_string(Command c) {
  for (const auto& [cmd, name] : command_names()) {
    if (cmd == c) return name;
  }
  return "?";
}

Command command_from_string(const std::string& s) {
  for (const auto& [cmd, name] : command_names()) {
    if (name == s) return cmd;
  }
  throw ConfigError("unknown command '" + s + "'");
}

ModelSpec RunConfig::model_spec() const {
  ModelSpec s;
  s.model = model;
  s.d = d;
  s.weights = law;
  s.functional = functional;
  s.lateral = lateral;
  return s;
}

// ---- parsing -------------------------------------------------------------

namespace {

std::int64_t to_int64(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  long long x = 0;
  try {
    x = std::stoll(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) {
    throw ConfigError(key + ": expected an integer, got '" + v + "'");
  }
  return x;
}

int to_int(const std::string& key, const std::string& v) {
  const std::int64_t x = to_int64(key, v);
  if (x < INT32_MIN || x > INT32_MAX) throw ConfigError(key + ": out of range");
  return static_cast<int>(x);
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  unsigned long long x = 0;
  try {
    if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
    x = std::stoull(v, &used, 0);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) {
    throw ConfigError(key + ": expected a nonnegative integer, got '" + v + "'");
  }
  return x;
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double x = 0;
  try {
    x = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
  return x;
}

template <class T, class F>
std::vector<T> to_list(const std::string& key, const std::string& v, F conv) {
  std::vector<T> out;
  for (const std::string& tok : split(v, ',')) out.push_back(conv(key, tok));
  return out;
}

template <class T>
T wrap(const std::string& key, const std::function<T()>& f) {
  try {
    return f();
  } catch (const std::exception& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

using Setter = std::function<void(RunConfig&, const std::string&)>;

const std::map<std::string, std::map<std::string, Setter>>& setters() {
  static const std::map<std::string, std::map<std::string, Setter>> table = {
      {"run",
       {
           {"command", [](RunConfig& c, const std::string& v) { c.command = command_from_string(v); }},
           {"seed", [](RunConfig& c, const std::string& v) { c.seed = to_u64("seed", v); }},
           {"replicas", [](RunConfig& c, const std::string& v) { c.replicas = to_int64("replicas", v); }},
           {"method", [](RunConfig& c, const std::string& v) {
              c.method = wrap<Method>("method", [&] { return method_from_string(v); });
            }},
           {"out", [](RunConfig& c, const std::string& v) { c.out = v; }},
           {"results", [](RunConfig& c, const std::string& v) { c.results = v; }},
       }},
      {"model",
       {
           {"model", [](RunConfig& c, const std::string& v) {
              c.model = wrap<Model>("model", [&] { return model_from_string(v); });
            }},
           {"d", [](RunConfig& c, const std::string& v) { c.d = to_int("d", v); }},
           {"law", [](RunConfig& c, const std::string& v) {
              c.law = wrap<WeightModel>("law", [&] { return WeightModel::parse(v); });
            }},
           {"functional", [](RunConfig& c, const std::string& v) {
              c.functional = wrap<Functional>("functional", [&] { return functional_from_string(v); });
            }},
           {"lateral", [](RunConfig& c, const std::string& v) { c.lateral = to_int("lateral", v); }},
       }},
      {"estimate",
       {
           {"n", [](RunConfig& c, const std::string& v) { c.n = to_list<int>("n", v, to_int); }},
           {"epsilon", [](RunConfig& c, const std::string& v) { c.epsilon = to_double("epsilon", v); }},
           {"delta", [](RunConfig& c, const std::string& v) { c.delta = to_double("delta", v); }},
           {"side", [](RunConfig& c, const std::string& v) {
              c.side = wrap<Side>("side", [&] { return side_from_string(v); });
            }},
           {"center", [](RunConfig& c, const std::string& v) { c.center = to_double("center", v); }},
           {"center_stderr", [](RunConfig& c, const std::string& v) {
              c.center_stderr = to_double("center_stderr", v);
            }},
           {"center_grid", [](RunConfig& c, const std::string& v) {
              c.center_grid = to_list<int>("center_grid", v, to_int);
            }},
           {"center_replicas", [](RunConfig& c, const std::string& v) {
              c.center_replicas = to_int("center_replicas", v);
            }},
           {"tilt", [](RunConfig& c, const std::string& v) {
              if (v != "shells" && v != "path") throw ConfigError("tilt: shells or path");
              c.tilt = v;
            }},
           {"tilt_grid", [](RunConfig& c, const std::string& v) {
              c.tilt_grid = to_list<double>("tilt_grid", v, to_double);
            }},
           {"pilot", [](RunConfig& c, const std::string& v) { c.pilot = to_int64("pilot", v); }},
           {"points", [](RunConfig& c, const std::string& v) {
              c.points.clear();
              for (const std::string& tok : split(v, ',')) {
                const auto colon = tok.find(':');
                if (colon == std::string::npos) throw ConfigError("points: expected n:log_p");
                c.points.emplace_back(to_int("points", trim(tok.substr(0, colon))),
                                      to_double("points", trim(tok.substr(colon + 1))));
              }
            }},
           {"input", [](RunConfig& c, const std::string& v) { c.input = v; }},
       }},
      {"summability",
       {
           {"f", [](RunConfig& c, const std::string& v) {
              c.f = wrap<FSpec>("f", [&] { return FSpec::parse(v); });
            }},
           {"n_max", [](RunConfig& c, const std::string& v) { c.n_max = to_int("n_max", v); }},
           {"form", [](RunConfig& c, const std::string& v) {
              if (v == "lower") c.form = SummabilityForm::LowerTailM1;
              else if (v == "upper") c.form = SummabilityForm::UpperTailM2;
              else throw ConfigError("form: lower or upper");
            }},
       }},
      {"shell",
       {
           {"N", [](RunConfig& c, const std::string& v) { c.N = to_int("N", v); }},
           {"M", [](RunConfig& c, const std::string& v) { c.M = to_double("M", v); }},
       }},
      {"event",
       {
           {"name", [](RunConfig& c, const std::string& v) {
              wrap<EventName>("name", [&] { return event_from_string(v); });
              c.event = v;
            }},
           {"params", [](RunConfig& c, const std::string& v) { c.params = v; }},
           {"window_level", [](RunConfig& c, const std::string& v) {
              c.window_level = to_int("window_level", v);
            }},
           {"window_half", [](RunConfig& c, const std::string& v) {
              c.window_half = to_int("window_half", v);
            }},
       }},
      {"oracle",
       {
           {"max_length", [](RunConfig& c, const std::string& v) {
              c.max_length = to_int("max_length", v);
            }},
       }},
  };
  return table;
}

}  // namespace

RunConfig parse_config(const std::string& text, std::vector<std::string>* keys) {
  RunConfig c;
  std::string section;
  std::map<std::string, int> seen;
  std::istringstream in(text);
  int lineno = 0;
  for (std::string raw; std::getline(in, raw);) {
    ++lineno;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    const std::string where = "line " + std::to_string(lineno) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (!setters().count(section)) throw ConfigError(where + "unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    if (section.empty()) throw ConfigError(where + "key outside any section");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto& known = setters().at(section);
    const auto it = known.find(key);
    if (it == known.end()) throw ConfigError(where + "unknown key '" + key + "' in [" + section + "]");
    if (seen[section + "." + key]++) throw ConfigError(where + "duplicate key '" + key + "'");
    try {
      it->second(c, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
    if (keys) keys->push_back(section + "." + key);
  }
  return c;
}

namespace {

template <class T, class F>
std::string join_list(const std::vector<T>& v, F f) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += f(v[i]);
  }
  return out;
}

std::string int_str(int x) { return std::to_string(x); }

}  // namespace

std::string serialize_config(const RunConfig& c) {
  std::ostringstream o;
  o << "[run]\n";
  o << "command = " << to_string(c.command) << "\n";
  if (c.seed) o << "seed = " << *c.seed << "\n";
  o << "replicas = " << c.replicas << "\n";
  o << "method = " << to_string(c.method) << "\n";
  if (!c.out.empty()) o << "out = " << c.out << "\n";
  if (!c.results.empty()) o << "results = " << c.results << "\n";
  o << "\n[model]\n";
  o << "model = " << to_string(c.model) << "\n";
  o << "d = " << c.d << "\n";
  o << "law = " << c.law.describe() << "\n";
  o << "functional = " << to_string(c.functional) << "\n";
  if (c.lateral) o << "lateral = " << *c.lateral << "\n";
  o << "\n[estimate]\n";
  if (!c.n.empty()) o << "n = " << join_list(c.n, int_str) << "\n";
  o << "epsilon = " << format_number(c.epsilon) << "\n";
  o << "delta = " << format_number(c.delta) << "\n";
  o << "side = " << to_string(c.side) << "\n";
  if (c.center) o << "center = " << format_number(*c.center) << "\n";
  if (c.center_stderr) o << "center_stderr = " << format_number(*c.center_stderr) << "\n";
  if (!c.center_grid.empty()) o << "center_grid = " << join_list(c.center_grid, int_str) << "\n";
  o << "center_replicas = " << c.center_replicas << "\n";
  o << "tilt = " << c.tilt << "\n";
  if (!c.tilt_grid.empty()) o << "tilt_grid = " << join_list(c.tilt_grid, format_number) << "\n";
  o << "pilot = " << c.pilot << "\n";
  if (!c.points.empty()) {
    o << "points = "
      << join_list(c.points, [](const auto& p) {
           return std::to_string(p.first) + ":" + format_number(p.second);
         })
      << "\n";
  }
  if (!c.input.empty()) o << "input = " << c.input << "\n";
  o << "\n[summability]\n";
  o << "f = " << c.f.describe() << "\n";
  o << "n_max = " << c.n_max << "\n";
  o << "form = " << (c.form == SummabilityForm::LowerTailM1 ? "lower" : "upper") << "\n";
  o << "\n[shell]\n";
  o << "N = " << c.N << "\n";
  o << "M = " << format_number(c.M) << "\n";
  o << "\n[event]\n";
  if (!c.event.empty()) o << "name = " << c.event << "\n";
  if (!c.params.empty()) o << "params = " << c.params << "\n";
  o << "window_level = " << c.window_level << "\n";
  o << "window_half = " << c.window_half << "\n";
  o << "\n[oracle]\n";
  o << "max_length = " << c.max_length << "\n";
  return o.str();
}

void validate(const RunConfig& c) {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  if (c.command != Command::EmitPlotData) {
    need(c.seed.has_value(), "[run] seed is mandatory (or pass --seed)");
  }
  need(c.replicas >= 1, "[run] replicas must be >= 1");
  need(c.d >= 1, "[model] d must be >= 1");
  switch (c.command) {
    case Command::EstimateConstant:
    case Command::OracleCrosscheck:
      need(!c.n.empty(), "[estimate] n is required");
      break;
    case Command::LdCurve:
      need(!c.n.empty(), "[estimate] n is required");
      need(c.pilot >= 1, "[estimate] pilot must be >= 1");
      break;
    case Command::FitRate:
      need(!c.points.empty() || !c.input.empty(),
           "[estimate] points or input is required");
      need(c.points.empty() || c.input.empty(),
           "[estimate] give points or input, not both");
      break;
    case Command::CheckSummability:
      need(c.n_max >= 1, "[summability] n_max must be >= 1");
      break;
    case Command::DetectEvent:
      need(!c.event.empty(), "[event] name is required");
      need(c.model == Model::M1 ? c.window_level >= 1 : c.window_half >= 1,
           "[event] window_level (Model 1) or window_half (Model 2) is required");
      break;
    case Command::VerifyShellBound:
      need(c.center.has_value(), "[estimate] center (mu_hat) is required");
      break;
    case Command::EmitPlotData:
      need(!c.results.empty(), "[run] results directory is required");
      break;
  }
}

const std::vector<std::string>& tidy_columns() {
  static const std::vector<std::string> cols = {
      "run",    "command",  "model", "d",     "n",      "epsilon", "side",
      "method", "quantity", "label", "value", "stderr", "seed"};
  return cols;
}

// ---- artifacts -----------------------------------------------------------

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

class Csv {
 public:
  explicit Csv(std::vector<std::string> header) : width_(header.size()) { add(header); }
  void add(const std::vector<std::string>& row) {
    if (row.size() != width_) throw std::logic_error("csv row width");
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) text_ += ',';
      text_ += csv_field(row[i]);
    }
    text_ += '\n';
  }
  const std::string& text() const { return text_; }

 private:
  std::size_t width_;
  std::string text_;
};

std::vector<std::string> parse_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw IoError("cannot open " + p.string() + " for writing");
  f << text;
  f.close();
  if (!f) throw IoError("write failed: " + p.string());
}

std::string read_text(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw IoError("cannot read " + p.string());
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

json num(double x) {
  if (std::isfinite(x)) return x;
  return format_number(x);
}

// One row of the tidy table, minus the run and command columns.
struct Tidy {
  std::string model, d, n, epsilon, side, method, quantity, label, value,
      stderr_, seed;
  json to_json() const {
    return {{"model", model},   {"d", d},           {"n", n},
            {"epsilon", epsilon}, {"side", side},   {"method", method},
            {"quantity", quantity}, {"label", label}, {"value", value},
            {"stderr", stderr_}, {"seed", seed}};
  }
};

struct Output {
  std::string csv;
  json result;
  std::vector<Tidy> tidy;
};

Tidy base_row(const RunConfig& c) {
  Tidy t;
  t.model = to_string(c.model);
  t.d = std::to_string(c.d);
  t.seed = c.seed ? std::to_string(*c.seed) : "";
  return t;
}

// ---- commands ------------------------------------------------------------

Output cmd_estimate_constant(const RunConfig& c) {
  const auto tc = estimate_time_constant(c.model_spec(), c.n,
                                         static_cast<int>(c.replicas), *c.seed);
  Output o;
  Csv csv({"n", "mean", "stderr", "replicas", "seed"});
  for (std::size_t i = 0; i < tc.n_grid.size(); ++i) {
    csv.add({std::to_string(tc.n_grid[i]), format_number(tc.mean[i]),
             format_number(tc.se[i]), std::to_string(tc.replicas),
             std::to_string(tc.seed)});
    Tidy t = base_row(c);
    t.n = std::to_string(tc.n_grid[i]);
    t.quantity = "mean_over_n";
    t.label = c.law.describe();
    t.value = format_number(tc.mean[i]);
    t.stderr_ = format_number(tc.se[i]);
    o.tidy.push_back(t);
  }
  o.csv = csv.text();
  o.result = to_json(tc);
  return o;
}

std::vector<TiltProposal> tilt_candidates(const RunConfig& c, int n) {
  std::vector<double> grid = c.tilt_grid;
  std::vector<TiltProposal> out;
  if (c.tilt == "path") {
    if (grid.empty()) grid = {0.5, 1.0, 1.5};
    for (double th : grid) out.push_back(TiltProposal::path_mixture(th));
    return out;
  }
  if (grid.empty()) grid = {0.1, 0.2, 0.3, 0.5};
  if (n < 2 || (n & (n - 1)) != 0) {
    throw EstimationError("shell tilts need n = 2^N, got " + std::to_string(n));
  }
  const int N = static_cast<int>(std::lround(std::log2(n)));
  for (double M : grid) {
    out.push_back(TiltProposal::from_schedule(
        shell_tilt_schedule(N, c.delta, M, c.law), M));
  }
  return out;
}

Output cmd_ld_curve(const RunConfig& c) {
  const ModelSpec spec = c.model_spec();
  double center = 0.0;
  std::optional<double> center_se = c.center_stderr;
  json center_json;
  if (c.center) {
    center = *c.center;
    center_json = {{"source", "config"}, {"value", center}};
  } else {
    std::vector<int> grid = c.center_grid;
    if (grid.empty()) {
      const int top = *std::max_element(c.n.begin(), c.n.end());
      grid = {top, 2 * top, 4 * top};
    }
    const auto tc = estimate_time_constant(spec, grid, c.center_replicas,
                                           derive_seed(*c.seed, 0x63656e746572ULL));
    center = tc.estimate;
    center_se = tc.estimate_se;
    center_json = {{"source", "estimate-constant"}, {"estimate", to_json(tc)}};
  }
  Output o;
  Csv csv(ld_csv_header());
  json rows = json::array();
  for (int n : c.n) {
    LDRequest r;
    r.model = spec;
    r.n = n;
    r.epsilon = c.epsilon;
    r.side = c.side;
    r.method = c.method;
    r.center = center;
    r.center_stderr = center_se;
    r.replicas = c.replicas;
    r.seed = derive_seed(*c.seed, static_cast<std::uint64_t>(n));
    json extra;
    LDEstimate e;
    if (c.method == Method::TiltedIS) {
      const auto cands = tilt_candidates(c, n);
      if (cands.size() == 1) {
        r.tilt = cands[0];
        e = estimate_ld_probability(r);
      } else {
        const TiltSearch ts = estimate_with_tilt_search(r, cands, c.pilot);
        e = ts.estimate;
        extra = {{"strengths", ts.strengths}, {"pilot_ess", ts.pilot_ess},
                 {"selected", ts.best}};
      }
    } else {
      e = estimate_ld_probability(r);
    }
    csv.add(ld_csv_row(e));
    json j = to_json(e);
    if (!extra.is_null()) j["tilt_search"] = extra;
    rows.push_back(j);
    Tidy t = base_row(c);
    t.n = std::to_string(n);
    t.epsilon = format_number(c.epsilon);
    t.side = to_string(c.side);
    t.method = to_string(c.method);
    t.quantity = "log_p_hat";
    t.label = e.tilt;
    t.value = format_number(e.log_p_hat);
    t.stderr_ = format_number(e.se_log);
    t.seed = std::to_string(e.seed);
    o.tidy.push_back(t);
  }
  o.csv = csv.text();
  o.result = {{"schema", kEstimateSchemaVersion}, {"center", center_json},
              {"estimates", rows}};
  return o;
}

std::vector<std::pair<int, double>> read_points(const std::string& path) {
  std::istringstream in(read_text(path));
  std::string line;
  if (!std::getline(in, line)) throw IoError(path + ": empty file");
  const auto header = parse_csv_line(line);
  auto col = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw IoError(path + ": no column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t cn = col("n");
  const std::size_t cl = col("log_p_hat");
  std::vector<std::pair<int, double>> pts;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto row = parse_csv_line(line);
    if (row.size() != header.size()) throw IoError(path + ": ragged row");
    pts.emplace_back(to_int("n", row[cn]), to_double("log_p_hat", row[cl]));
  }
  return pts;
}

Output cmd_fit_rate(const RunConfig& c) {
  const auto pts = c.points.empty() ? read_points(c.input) : c.points;
  const RateFit fit = fit_rate(pts, c.d);
  Output o;
  Csv csv({"form", "c", "residual", "selected"});
  for (std::size_t i = 0; i < fit.forms.size(); ++i) {
    const RateForm& f = fit.forms[i];
    csv.add({f.name, format_number(f.c), format_number(f.residual),
             i == fit.selected ? "1" : "0"});
    Tidy t = base_row(c);
    t.quantity = "rate_c";
    t.label = f.name;
    t.value = format_number(f.c);
    t.stderr_ = format_number(f.residual);
    o.tidy.push_back(t);
  }
  o.csv = csv.text();
  o.result = to_json(fit);
  json p = json::array();
  for (const auto& [n, lp] : pts) p.push_back({n, lp});
  o.result["points"] = p;
  return o;
}

Output cmd_check_summability(const RunConfig& c) {
  const SummabilityReport rep = summability_classify(c.f, c.d, c.n_max, c.form);
  Output o;
  Csv csv({"n", "partial_sum"});
  for (std::size_t i = 0; i < rep.partial_sums.size(); ++i) {
    csv.add({std::to_string(i + 1), format_number(rep.partial_sums[i])});
    Tidy t = base_row(c);
    t.n = std::to_string(i + 1);
    t.quantity = "partial_sum";
    t.label = to_string(rep.verdict);
    t.value = format_number(rep.partial_sums[i]);
    o.tidy.push_back(t);
  }
  o.csv = csv.text();
  json sums = json::array();
  for (double s : rep.partial_sums) sums.push_back(num(s));
  o.result = {{"schema", kEstimateSchemaVersion},
              {"f", c.f.describe()},
              {"d", c.d},
              {"form", c.form == SummabilityForm::LowerTailM1 ? "lower" : "upper"},
              {"verdict", to_string(rep.verdict)},
              {"exponent", rep.exponent},
              {"remainder_bound", num(rep.remainder_bound)},
              {"reason", rep.reason},
              {"partial_sums", sums}};
  return o;
}

Output cmd_detect_event(const RunConfig& c) {
  const EventSpec spec = parse_event_spec(c.event, c.params);
  Window win;
  if (c.model == Model::M1) {
    win = Window::m1_cone(c.d, c.window_level);
  } else {
    win = Window::m2_box(Box::cube(c.d, -c.window_half, c.window_half));
  }
  Output o;
  Csv csv({"replica", "occurred", "achieved", "threshold"});
  std::int64_t hits = 0;
  json first;
  for (std::int64_t r = 0; r < c.replicas; ++r) {
    FieldSample field(derive_seed(*c.seed, static_cast<std::uint64_t>(r)), win, c.law);
    const EventResult e = detect_event(field, spec);
    if (e.occurred) ++hits;
    if (r == 0) first = e.witness;
    csv.add({std::to_string(r), e.occurred ? "1" : "0", format_number(e.achieved),
             format_number(e.threshold)});
  }
  const double freq = static_cast<double>(hits) / c.replicas;
  const auto [lo, hi] = wilson_interval(hits, c.replicas);
  o.csv = csv.text();
  o.result = {{"schema", kEstimateSchemaVersion},
              {"event", to_string(spec.name)},
              {"params", format_event_params(spec)},
              {"replicas", c.replicas},
              {"occurrences", hits},
              {"frequency", freq},
              {"wilson", {lo, hi}},
              {"witness_replica_0", first}};
  Tidy t = base_row(c);
  t.quantity = "frequency";
  t.label = to_string(spec.name);
  t.value = format_number(freq);
  t.stderr_ = format_number(std::sqrt(freq * (1 - freq) / c.replicas));
  o.tidy.push_back(t);
  return o;
}

Output cmd_verify_shell_bound(const RunConfig& c) {
  const ShellBound b = verify_shell_bound(c.N, c.M, c.epsilon, *c.center, c.d);
  Output o;
  Csv csv({"N", "M", "epsilon", "mu", "Z", "bound", "holds"});
  csv.add({std::to_string(c.N), format_number(c.M), format_number(c.epsilon),
           format_number(*c.center), format_number(b.Z), format_number(b.bound),
           b.holds ? "1" : "0"});
  o.csv = csv.text();
  o.result = {{"schema", kEstimateSchemaVersion}, {"N", c.N},
              {"M", c.M},          {"epsilon", c.epsilon},
              {"mu", *c.center},   {"d", c.d},
              {"Z", b.Z},          {"bound", b.bound},
              {"holds", b.holds}};
  for (const auto& [q, v] : {std::pair{"Z", b.Z}, std::pair{"bound", b.bound}}) {
    Tidy t = base_row(c);
    t.n = std::to_string(1 << c.N);
    t.epsilon = format_number(c.epsilon);
    t.quantity = q;
    t.label = b.holds ? "holds" : "fails";
    t.value = format_number(v);
    o.tidy.push_back(t);
  }
  return o;
}

Output cmd_oracle_crosscheck(const RunConfig& c) {
  const ModelSpec spec = c.model_spec();
  Output o;
  Csv csv({"n", "fields", "mismatches", "max_abs_diff"});
  json per_n = json::array();
  bool all_equal = true;
  for (int n : c.n) {
    const Window win = window_for(spec, n);
    const int max_len = c.max_length > 0
                            ? c.max_length
                            : static_cast<int>(win.box.volume() - 1);
    std::int64_t mismatches = 0;
    double worst = 0.0;
    for (std::int64_t r = 0; r < c.replicas; ++r) {
      FieldSample field(derive_seed(*c.seed, static_cast<std::uint64_t>(r)), win, c.law);
      double fast = 0.0;
      double slow = 0.0;
      if (c.model == Model::M1) {
        fast = last_passage(field, n).value;
        slow = exhaustive_last_passage(field, n).value;
      } else if (c.functional == Functional::Point) {
        fast = first_passage_point(field, n).value;
        slow = exhaustive_first_passage_point(field, n, max_len).value;
      } else {
        fast = first_passage_plane(field, n).value;
        slow = exhaustive_first_passage_plane(field, n, max_len).value;
      }
      const double diff = std::abs(fast - slow);
      worst = std::max(worst, diff);
      if (diff > 1e-9) ++mismatches;
    }
    if (mismatches) all_equal = false;
    csv.add({std::to_string(n), std::to_string(c.replicas),
             std::to_string(mismatches), format_number(worst)});
    per_n.push_back({{"n", n}, {"mismatches", mismatches}, {"max_abs_diff", worst}});
    Tidy t = base_row(c);
    t.n = std::to_string(n);
    t.quantity = "max_abs_diff";
    t.label = c.model == Model::M1 ? "last_passage" : to_string(c.functional);
    t.value = format_number(worst);
    o.tidy.push_back(t);
  }
  o.csv = csv.text();
  o.result = {{"schema", kEstimateSchemaVersion},
              {"tolerance", 1e-9},
              {"all_equal", all_equal},
              {"per_n", per_n}};
  return o;
}

Output dispatch(const RunConfig& c) {
  switch (c.command) {
    case Command::EstimateConstant: return cmd_estimate_constant(c);
    case Command::LdCurve: return cmd_ld_curve(c);
    case Command::FitRate: return cmd_fit_rate(c);
    case Command::CheckSummability: return cmd_check_summability(c);
    case Command::DetectEvent: return cmd_detect_event(c);
    case Command::VerifyShellBound: return cmd_verify_shell_bound(c);
    case Command::OracleCrosscheck: return cmd_oracle_crosscheck(c);
    case Command::EmitPlotData: break;
  }
  throw std::logic_error("dispatch");
}

json manifest(const RunConfig& c, const std::vector<std::string>& artifacts,
              double wall) {
  return {{"schema", kManifestSchema},
          {"tool", "ldp"},
          {"versions",
           {{"ldp", kToolVersion},
            {"estimate_schema", kEstimateSchemaVersion},
            {"edge_id", kEdgeIdVersion},
            {"compiler", __VERSION__},
            {"cplusplus", __cplusplus}}},
          {"command", to_string(c.command)},
          {"config", serialize_config(c)},
          {"artifacts", artifacts},
          {"wall_time_s", wall}};
}

}  // namespace

std::string emit_plot_data(const fs::path& results) {
  if (!fs::is_directory(results)) {
    throw IoError("results directory " + results.string() + " not found");
  }
  std::vector<fs::path> manifests;
  for (const auto& entry : fs::recursive_directory_iterator(results)) {
    if (entry.is_regular_file() && entry.path().filename() == "manifest.json") {
      manifests.push_back(entry.path());
    }
  }
  std::sort(manifests.begin(), manifests.end());
  Csv csv(tidy_columns());
  std::size_t used = 0;
  for (const fs::path& m : manifests) {
    json man;
    try {
      man = json::parse(read_text(m));
    } catch (const json::exception& e) {
      throw IoError("corrupt manifest " + m.string() + ": " + e.what());
    }
    if (!man.is_object() || !man.contains("command") || !man.contains("config") ||
        !man["command"].is_string()) {
      throw IoError("corrupt manifest " + m.string() + ": missing fields");
    }
    const std::string command = man["command"];
    if (command == to_string(Command::EmitPlotData)) continue;
    const fs::path dir = m.parent_path();
    json result;
    try {
      result = json::parse(read_text(dir / "result.json"));
    } catch (const json::exception& e) {
      throw IoError("corrupt result.json in " + dir.string() + ": " + e.what());
    }
    if (!result.contains("tidy") || !result["tidy"].is_array()) {
      throw IoError("result.json in " + dir.string() + " has no tidy rows");
    }
    std::string run = fs::relative(dir, results).generic_string();
    for (const json& row : result["tidy"]) {
      std::vector<std::string> cells = {run, command};
      for (std::size_t i = 2; i < tidy_columns().size(); ++i) {
        const auto& k = tidy_columns()[i];
        if (!row.contains(k) || !row[k].is_string()) {
          throw IoError("tidy row in " + dir.string() + " lacks '" + k + "'");
        }
        cells.push_back(row[k]);
      }
      csv.add(cells);
    }
    ++used;
  }
  if (used == 0) throw IoError("no run manifest under " + results.string());
  return csv.text();
}

RunOutcome run(const RunConfig& config, const fs::path& out_dir) {
  RunOutcome outcome;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    validate(config);
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
    std::vector<std::string> names;
    if (config.command == Command::EmitPlotData) {
      write_text(out_dir / "tidy.csv", emit_plot_data(config.results));
      names = {"tidy.csv"};
    } else {
      Output o = dispatch(config);
      json tidy = json::array();
      for (const Tidy& t : o.tidy) tidy.push_back(t.to_json());
      o.result["tidy"] = tidy;
      o.result["command"] = to_string(config.command);
      write_text(out_dir / "data.csv", o.csv);
      write_text(out_dir / "result.json", o.result.dump(2) + "\n");
      names = {"data.csv", "result.json"};
    }
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_text(out_dir / "manifest.json", manifest(config, names, wall).dump(2) + "\n");
    names.push_back("manifest.json");
    for (const auto& n : names) outcome.artifacts.push_back(out_dir / n);
    outcome.message = to_string(config.command) + ": wrote " +
                      std::to_string(names.size()) + " artifacts to " + out_dir.string();
  } catch (const ConfigError& e) {
    outcome = {kConfigError, std::string("config error: ") + e.what(), {}};
  } catch (const EnumerationCapError& e) {
    outcome = {kCapExceeded, std::string("cap exceeded: ") + e.what(), {}};
  } catch (const IoError& e) {
    outcome = {kIoError, std::string("i/o error: ") + e.what(), {}};
  } catch (const fs::filesystem_error& e) {
    outcome = {kIoError, std::string("i/o error: ") + e.what(), {}};
  } catch (const EstimationError& e) {
    outcome = {kPreconditionError, std::string("precondition: ") + e.what(), {}};
  } catch (const ConstructionError& e) {
    outcome = {kPreconditionError, std::string("precondition: ") + e.what(), {}};
  } catch (const PassageError& e) {
    outcome = {kPreconditionError, std::string("precondition: ") + e.what(), {}};
  } catch (const WeightError& e) {
    outcome = {kPreconditionError, std::string("precondition: ") + e.what(), {}};
  } catch (const LatticeError& e) {
    outcome = {kPreconditionError, std::string("precondition: ") + e.what(), {}};
  }
  return outcome;
}

}  // namespace ldp::cli
