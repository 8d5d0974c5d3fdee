#include "mfl/harness.hpp"

#include "mfl/parallel.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace mfl {

const char* library_version() noexcept { return "0.1.0"; }

namespace {

[[noreturn]] void invalid(const std::string& path, const std::string& what) {
  throw Error(ErrorCode::ConfigInvalid, path + ": " + what);
}

// Reads keys from one JSON object and rejects whatever was not read.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) invalid(path_, "expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }
  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key)) invalid(at(key), "required");
    return j_.at(key);
  }

  double number(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_number()) invalid(at(key), "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) invalid(at(key), "must be finite");
    return d;
  }
  double number(const std::string& key, double fallback) { return has(key) ? number(key) : (seen_.insert(key), fallback); }

  long long integer(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_number_integer()) invalid(at(key), "expected an integer");
    return v.get<long long>();
  }
  long long integer(const std::string& key, long long fallback) {
    return has(key) ? integer(key) : (seen_.insert(key), fallback);
  }

  std::uint64_t unsigned_integer(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
      invalid(at(key), "expected a non-negative integer");
    }
    return v.get<std::uint64_t>();
  }

  bool boolean(const std::string& key, bool fallback) {
    if (!has(key)) return (seen_.insert(key), fallback);
    const json& v = raw(key);
    if (!v.is_boolean()) invalid(at(key), "expected true or false");
    return v.get<bool>();
  }

  std::string text(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_string()) invalid(at(key), "expected a string");
    return v.get<std::string>();
  }
  std::string text(const std::string& key, const std::string& fallback) {
    return has(key) ? text(key) : (seen_.insert(key), fallback);
  }

  Vec vector(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_array() || v.empty() || v.size() > static_cast<std::size_t>(kMaxAmbient)) {
      invalid(at(key), "expected an array of 1 to 6 numbers");
    }
    Vec out(static_cast<int>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number()) invalid(at(key) + "[" + std::to_string(i) + "]", "expected a number");
      out[static_cast<int>(i)] = v[i].get<double>();
    }
    return out;
  }

  std::vector<double> numbers(const std::string& key, std::vector<double> fallback) {
    if (!has(key)) return (seen_.insert(key), fallback);
    const json& v = raw(key);
    if (!v.is_array()) invalid(at(key), "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number()) invalid(at(key) + "[" + std::to_string(i) + "]", "expected a number");
      out.push_back(v[i].get<double>());
    }
    return out;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) invalid(at(it.key()), "unknown key");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

const char* form_name(TimeFactor::Form f) {
  switch (f) {
    case TimeFactor::Form::Constant: return "constant";
    case TimeFactor::Form::Linear: return "linear";
    case TimeFactor::Form::Exponential: return "exponential";
  }
  return "constant";
}

TimeFactor parse_factor(const json& j, const std::string& path) {
  Reader r(j, path);
  const std::string form = r.text("form", "constant");
  TimeFactor f;
  f.c0 = r.number("c0", 1.0);
  f.rate = r.number("rate", 0.0);
  if (form == "constant") f.form = TimeFactor::Form::Constant, f.rate = 0.0;
  else if (form == "linear") f.form = TimeFactor::Form::Linear;
  else if (form == "exponential") f.form = TimeFactor::Form::Exponential;
  else invalid(r.at("form"), "expected constant, linear or exponential");
  if (!(f.c0 > 0.0)) invalid(r.at("c0"), "must be positive");
  r.finish();
  return f;
}

json factor_json(const TimeFactor& f) {
  json j;
  j["form"] = form_name(f.form);
  j["c0"] = f.c0;
  j["rate"] = f.rate;
  return j;
}

}  // namespace

FlowSpec parse_flow_spec(const json& j) {
  Reader r(j, "flow");
  FlowSpec f;
  f.kind = r.text("kind");
  static const std::set<std::string> kinds{"euclidean", "sphere", "hyperbolic", "torus", "ricci_sphere"};
  if (!kinds.count(f.kind)) invalid("flow.kind", "expected euclidean, sphere, hyperbolic, torus or ricci_sphere");
  const long long dim = r.integer("dim");
  if (dim < 1 || dim > kMaxDim) invalid("flow.dim", "must be between 1 and 5");
  f.dim = static_cast<int>(dim);
  if (r.has("axes")) {
    if (f.kind != "torus") invalid("flow.axes", "only the torus takes per-axis factors");
    const json& axes = r.raw("axes");
    if (!axes.is_array() || (axes.size() != 1 && axes.size() != static_cast<std::size_t>(f.dim))) {
      invalid("flow.axes", "expected one factor or one per axis");
    }
    f.factors.clear();
    for (std::size_t i = 0; i < axes.size(); ++i) {
      f.factors.push_back(parse_factor(axes[i], "flow.axes[" + std::to_string(i) + "]"));
    }
    if (r.has("factor")) invalid("flow.factor", "give either factor or axes");
  } else if (r.has("factor")) {
    if (f.kind == "ricci_sphere") invalid("flow.factor", "the Ricci-flow sphere fixes its factor");
    f.factors = {parse_factor(r.raw("factor"), "flow.factor")};
  }
  if (r.has("drift")) {
    Reader d(r.raw("drift"), "flow.drift");
    f.drift = d.text("kind", "zero");
    if (f.drift == "linear_radial") {
      f.lambda = d.number("lambda");
      if (f.kind != "euclidean") invalid("flow.drift.kind", "linear_radial needs a euclidean flow");
    } else if (f.drift != "zero") {
      invalid("flow.drift.kind", "expected zero or linear_radial");
    }
    d.finish();
  }
  if ((f.kind == "sphere" || f.kind == "hyperbolic" || f.kind == "ricci_sphere") && f.dim < 2) {
    invalid("flow.dim", "curved model spaces need dimension at least 2");
  }
  r.finish();
  return f;
}

namespace {

json flow_json(const FlowSpec& f) {
  json j;
  j["kind"] = f.kind;
  j["dim"] = f.dim;
  if (f.kind != "ricci_sphere") {
    if (f.kind == "torus" && f.factors.size() > 1) {
      json axes = json::array();
      for (const auto& a : f.factors) axes.push_back(factor_json(a));
      j["axes"] = axes;
    } else {
      j["factor"] = factor_json(f.factors.front());
    }
  }
  json d;
  d["kind"] = f.drift;
  if (f.drift == "linear_radial") d["lambda"] = f.lambda;
  j["drift"] = d;
  return j;
}

const std::set<std::string>& time_keys() {
  static const std::set<std::string> keys{"s", "t", "r", "t1"};
  return keys;
}

// Every time-valued parameter must sit below the horizon margin.
void check_times(const json& j, const std::string& path, double limit) {
  if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const std::string p = path + "." + it.key();
      if (time_keys().count(it.key()) && it->is_number()) {
        const double v = it->get<double>();
        const double effective = it.key() == "t1" ? 2.0 * v : v;
        if (v < 0.0) invalid(p, "times must be non-negative");
        if (effective > limit) invalid(p, "time beyond the flow horizon minus the safety margin");
      } else if (it.key() == "hit_times" && it->is_array()) {
        for (const auto& v : *it) {
          if (v.is_number() && v.get<double>() > limit) invalid(p, "time beyond the flow horizon minus the safety margin");
        }
      } else {
        check_times(*it, p, limit);
      }
    }
  } else if (j.is_array()) {
    for (std::size_t i = 0; i < j.size(); ++i) check_times(j[i], path + "[" + std::to_string(i) + "]", limit);
  }
}

std::string now_text() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

json vec_json(const Vec& v) {
  json a = json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Vec point(Reader& r, const std::string& key, const MetricFlow& flow) {
  const Vec x = r.vector(key);
  if (x.size() != flow.ambient_dim()) {
    invalid(r.at(key), "expected " + std::to_string(flow.ambient_dim()) + " coordinates");
  }
  try {
    flow.check_point(x);
  } catch (const Error&) {
    invalid(r.at(key), "point is not on the manifold");
  }
  return x;
}

CurvatureData curvature_from(Reader& r, const MetricFlow& flow) {
  if (!r.has("K")) return flow.curvature_bound();
  const json& k = r.raw("K");
  if (k.is_number()) return CurvatureData::constant(k.get<double>());
  if (k.is_string() && k.get<std::string>() == "auto") return flow.curvature_bound();
  invalid(r.at("K"), "expected \"auto\" or a number");
}

McConfig mc_from(const McSpec& m, std::uint64_t task) {
  McConfig mc;
  mc.n_paths = m.n_paths;
  mc.step = m.step;
  mc.seed = m.seed;
  mc.task = task;
  return mc;
}

std::function<double(double)> function_from_json(const json& j, const std::string& path) {
  Reader r(j, path);
  const std::string type = r.text("type");
  std::function<double(double)> fn;
  if (type == "constant") {
    const double v = r.number("value");
    fn = [v](double) { return v; };
  } else if (type == "power") {
    const double a = r.number("coef", 1.0);
    const double k = r.number("exponent");
    fn = [a, k](double s) { return a * std::pow(s, k); };
  } else if (type == "log") {
    const double a = r.number("coef", 1.0);
    fn = [a](double s) { return a * std::log(std::exp(1.0) + s); };
  } else if (type == "sum") {
    const json& terms = r.raw("terms");
    if (!terms.is_array() || terms.empty()) invalid(r.at("terms"), "expected a non-empty array");
    std::vector<std::function<double(double)>> parts;
    for (std::size_t i = 0; i < terms.size(); ++i) {
      parts.push_back(function_from_json(terms[i], r.at("terms") + "[" + std::to_string(i) + "]"));
    }
    fn = [parts](double s) {
      double acc = 0.0;
      for (const auto& p : parts) acc += p(s);
      return acc;
    };
  } else {
    invalid(r.at("type"), "expected constant, power, log or sum");
  }
  r.finish();
  return fn;
}

// Validates task parameters without running anything.
void validate_params(const ExperimentConfig& cfg, const MetricFlow& flow);

}  // namespace

MetricFlow FlowSpec::build() const {
  DriftField z = drift == "linear_radial" ? DriftField::linear_radial(lambda) : DriftField::zero();
  if (kind == "euclidean") return MetricFlow::euclidean(dim, factors.front(), z);
  if (kind == "sphere") return MetricFlow::sphere(dim, factors.front(), z);
  if (kind == "hyperbolic") return MetricFlow::hyperbolic(dim, factors.front(), z);
  if (kind == "torus") return MetricFlow::torus(dim, factors, z);
  if (kind == "ricci_sphere") return MetricFlow::ricci_sphere(dim);
  throw Error(ErrorCode::ConfigInvalid, "flow.kind: unknown flow");
}

ScalarField field_from_json(const MetricFlow& flow, const json& j, const std::string& path) {
  Reader r(j, path);
  const std::string type = r.text("type");
  const int n = flow.ambient_dim();
  auto index = [&](const std::string& key) {
    const long long i = r.integer(key);
    if (i < 0 || i >= n) invalid(r.at(key), "index out of range");
    return static_cast<int>(i);
  };
  ScalarField f;
  if (type == "constant") {
    f = fields::constant(r.number("value"));
  } else if (type == "coordinate") {
    const int i = index("index");
    f = fields::coordinate(flow, i, r.number("offset", 0.0), r.number("scale", 1.0));
  } else if (type == "linear") {
    const Vec a = r.vector("a");
    if (a.size() != n) invalid(r.at("a"), "expected " + std::to_string(n) + " coefficients");
    f = fields::linear(a, r.number("offset", 0.0));
  } else if (type == "square") {
    const int i = index("index");
    f = fields::square(i, r.number("scale", 1.0));
  } else if (type == "sine") {
    const int i = index("index");
    f = fields::sine(i, r.number("offset", 0.0), r.number("scale", 1.0));
  } else if (type == "gaussian_bump") {
    const Vec c = r.vector("center");
    if (c.size() != n) invalid(r.at("center"), "expected " + std::to_string(n) + " coordinates");
    const double w = r.number("width");
    if (!(w > 0.0)) invalid(r.at("width"), "must be positive");
    f = fields::gaussian_bump(c, w, r.number("offset", 0.0), r.number("scale", 1.0));
  } else if (type == "soft_exp") {
    const int i = index("index");
    const double cap = r.number("cap");
    if (!(cap > 0.0)) invalid(r.at("cap"), "must be positive");
    f = fields::soft_exp(i, cap);
  } else {
    invalid(r.at("type"), "expected constant, coordinate, linear, square, sine, gaussian_bump or soft_exp");
  }
  if (r.boolean("numeric_gradient", false)) f = with_numeric_gradient(flow, f);
  r.finish();
  return f;
}

ExperimentConfig parse_config(const json& j) {
  Reader r(j, "");
  ExperimentConfig cfg;
  const long long version = r.integer("schema_version");
  if (version != kSchemaVersion) invalid("schema_version", "unsupported schema version");
  cfg.task = r.text("task");
  static const std::set<std::string> tasks{"simulate", "gradient", "couple", "verify", "nonexplosion", "recover"};
  if (!tasks.count(cfg.task)) invalid("task", "expected simulate, gradient, couple, verify, nonexplosion or recover");
  cfg.flow = parse_flow_spec(r.raw("flow"));
  if (r.has("params")) cfg.params = r.raw("params");
  if (!cfg.params.is_object()) invalid("params", "expected an object");
  {
    Reader m(r.raw("mc"), "mc");
    const long long n = m.integer("n_paths");
    if (n < 100) invalid("mc.n_paths", "must be at least 100");
    cfg.mc.n_paths = static_cast<std::size_t>(n);
    cfg.mc.step = m.number("step");
    if (!(cfg.mc.step > 0.0)) invalid("mc.step", "must be positive");
    cfg.mc.seed = m.unsigned_integer("seed");
    m.finish();
  }
  if (r.has("output")) {
    Reader o(r.raw("output"), "output");
    cfg.output.directory = o.text("directory", cfg.output.directory);
    if (o.has("formats")) {
      const json& f = o.raw("formats");
      if (!f.is_array()) invalid("output.formats", "expected an array");
      cfg.output.formats.clear();
      for (const auto& v : f) {
        if (!v.is_string()) invalid("output.formats", "expected strings");
        const std::string s = v.get<std::string>();
        if (s != "json" && s != "csv" && s != "svg") invalid("output.formats", "unknown format " + s);
        cfg.output.formats.push_back(s);
      }
    }
    o.finish();
  }
  r.finish();

  MetricFlow flow = [&] {
    try {
      return cfg.flow.build();
    } catch (const Error& e) {
      invalid("flow", e.what());
    }
  }();
  check_times(cfg.params, "params", flow.horizon() - kHorizonMargin);
  validate_params(cfg, flow);
  return cfg;
}

ExperimentConfig parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ConfigInvalid, std::string("config: not valid JSON (") + e.what() + ")");
  }
  return parse_config(j);
}

json config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["schema_version"] = cfg.schema_version;
  j["task"] = cfg.task;
  j["flow"] = flow_json(cfg.flow);
  j["params"] = cfg.params;
  json mc;
  mc["n_paths"] = cfg.mc.n_paths;
  mc["step"] = cfg.mc.step;
  mc["seed"] = cfg.mc.seed;
  j["mc"] = mc;
  json out;
  out["directory"] = cfg.output.directory;
  out["formats"] = cfg.output.formats;
  j["output"] = out;
  return j;
}

json estimate_to_json(const Estimate& e) {
  json j;
  j["mean"] = e.mean;
  j["stderr"] = e.stderr_;
  j["n"] = e.n;
  return j;
}

namespace {

json vector_estimate_json(const VectorEstimate& e) {
  json j;
  j["mean"] = vec_json(e.mean);
  j["stderr"] = vec_json(e.stderr_);
  j["n"] = e.n;
  return j;
}

json error_json(const std::string& name, const Error& e) {
  json j;
  j["name"] = name;
  j["kind"] = "error";
  j["code"] = error_code_name(e.code());
  j["message"] = e.what();
  return j;
}

json diag(const std::string& name, double value) {
  json j;
  j["name"] = name;
  j["value"] = value;
  return j;
}

}  // namespace

json verdict_to_json(const Verdict& v) {
  json j;
  j["name"] = v.name;
  j["kind"] = "verdict";
  j["item"] = v.item;
  j["lhs"] = estimate_to_json(v.lhs);
  j["rhs"] = estimate_to_json(v.rhs);
  j["slack"] = v.slack;
  j["stderr"] = v.combined_stderr;
  j["holds"] = v.holds;
  j["seed"] = v.seed;
  json c = json::object();
  for (const auto& [k, val] : v.config) c[k] = val;
  j["config"] = c;
  json d = json::object();
  for (const auto& [k, val] : v.diagnostics) d[k] = val;
  j["diagnostics"] = d;
  return j;
}

json ReportBundle::to_json() const {
  json j;
  j["version"] = version;
  j["created"] = created;
  j["seed"] = config.mc.seed;
  j["config"] = config_to_json(config);
  j["results"] = results;
  j["diagnostics"] = diagnostics;
  return j;
}

namespace {

// ---------------------------------------------------------------------------
// Task runners. Each reads its parameters through a Reader so that
// validation and execution share one code path; `dry` skips the work.

struct Context {
  const ExperimentConfig& cfg;
  const MetricFlow& flow;
  ReportBundle* out;  // null for validation only
  bool dry() const { return out == nullptr; }
};

template <class Fn>
void guarded(Context& ctx, const std::string& name, Fn fn) {
  if (ctx.dry()) return;
  try {
    fn();
  } catch (const Error& e) {
    ctx.out->results.push_back(error_json(name, e));
    ++ctx.out->errors;
  }
}

void run_simulate(Context& ctx) {
  Reader r(ctx.cfg.params, "params");
  const double s = r.number("s", 0.0);
  const double t = r.number("t");
  if (!(t > s)) invalid("params.t", "must exceed s");
  const Vec x = point(r, "x", ctx.flow);
  const long long record = r.integer("record_paths", 10);
  if (record < 0) invalid("params.record_paths", "must be non-negative");
  const bool damped = r.boolean("damped", false);
  r.finish();
  guarded(ctx, "simulate", [&] {
    const MetricFlow& flow = ctx.flow;
    const McConfig mc = mc_from(ctx.cfg.mc, 1);
    const std::size_t n = mc.n_paths;
    const int m = flow.ambient_dim();
    const Mat u0 = flow.orthonormal_frame(s, x);
    std::vector<Vec> ends(n);
    std::vector<double> sq(n), defect(n), gs(n), qnorm(n);
    std::vector<PathSample> kept(std::min<std::size_t>(n, static_cast<std::size_t>(record)));
    std::vector<std::vector<double>> kept_q(kept.size());
    parallel_for(n, [&](std::size_t i) {
      PathSample p = simulate_path(flow, x, u0, s, t, mc.step, NoiseStream(mc.seed, mc.task, i));
      ends[i] = p.states.back().x;
      sq[i] = std::pow(safe_distance(flow, t, x, ends[i]), 2);
      defect[i] = p.frame_defects.empty() ? 0.0 : *std::max_element(p.frame_defects.begin(), p.frame_defects.end());
      gs[i] = p.max_gs_correction;
      if (damped) {
        const DampedTransport dt = evolve_Q(flow, p);
        qnorm[i] = operator_norm(dt.Q.back());
        if (i < kept.size()) {
          for (const auto& q : dt.Q) kept_q[i].push_back(operator_norm(q));
        }
      }
      if (i < kept.size()) kept[i] = std::move(p);
    });
    json res;
    res["name"] = "terminal_moments";
    res["kind"] = "estimate_set";
    json mean = json::array(), var = json::array();
    for (int c = 0; c < m; ++c) {
      std::vector<double> col(n), dev(n);
      for (std::size_t i = 0; i < n; ++i) col[i] = ends[i][c];
      const Estimate e = summarize(col);
      for (std::size_t i = 0; i < n; ++i) dev[i] = (col[i] - e.mean) * (col[i] - e.mean) * n / (n - 1.0);
      mean.push_back(estimate_to_json(e));
      var.push_back(estimate_to_json(summarize(dev)));
    }
    res["coordinate_mean"] = mean;
    res["coordinate_variance"] = var;
    res["mean_squared_distance"] = estimate_to_json(summarize(sq));
    if (damped) res["terminal_q_norm"] = estimate_to_json(summarize(qnorm));
    ctx.out->results.push_back(res);
    ctx.out->diagnostics.push_back(diag("max_frame_defect", *std::max_element(defect.begin(), defect.end())));
    ctx.out->diagnostics.push_back(diag("max_gs_correction", *std::max_element(gs.begin(), gs.end())));

    Table paths{"paths", {"path_id", "k", "t"}, {}};
    for (int c = 0; c < m; ++c) paths.header.push_back("x" + std::to_string(c));
    paths.header.push_back("frame_defect");
    Table qt{"q_norms", {"path_id", "k", "normQ"}, {}};
    for (std::size_t i = 0; i < kept.size(); ++i) {
      const PathSample& p = kept[i];
      for (std::size_t k = 0; k < p.states.size(); ++k) {
        std::vector<double> row{double(i), double(k), p.times[k]};
        for (int c = 0; c < m; ++c) row.push_back(p.states[k].x[c]);
        row.push_back(k == 0 ? 0.0 : p.frame_defects[k - 1]);
        paths.rows.push_back(std::move(row));
        if (damped) qt.rows.push_back({double(i), double(k), kept_q[i][k]});
      }
    }
    ctx.out->tables.push_back(std::move(paths));
    if (damped) ctx.out->tables.push_back(std::move(qt));
  });
}

HProfile profile_from(Reader& r) {
  if (!r.has("profile")) return HProfile::linear();
  Reader p(r.raw("profile"), "params.profile");
  const std::string type = p.text("type");
  HProfile h;
  if (type == "linear") {
    h = HProfile::linear();
  } else if (type == "custom") {
    const json& k = p.raw("knots");
    if (!k.is_array()) invalid("params.profile.knots", "expected an array of [r, h] pairs");
    std::vector<std::pair<double, double>> knots;
    for (const auto& e : k) {
      if (!e.is_array() || e.size() != 2 || !e[0].is_number() || !e[1].is_number()) {
        invalid("params.profile.knots", "expected [r, h] number pairs");
      }
      knots.emplace_back(e[0].get<double>(), e[1].get<double>());
    }
    try {
      h = HProfile::custom(knots);
    } catch (const Error& e) {
      invalid("params.profile.knots", e.what());
    }
  } else {
    invalid("params.profile.type", "expected linear or custom");
  }
  p.finish();
  return h;
}

void run_gradient(Context& ctx) {
  Reader r(ctx.cfg.params, "params");
  const double s = r.number("s", 0.0);
  const double t = r.number("t");
  if (!(t >= s)) invalid("params.t", "must not precede s");
  const Vec x = point(r, "x", ctx.flow);
  const ScalarField f = field_from_json(ctx.flow, r.raw("f"), "params.f");
  const std::string est = r.text("estimator", "both");
  static const std::set<std::string> kinds{"pathwise", "integrated", "both", "local", "semigroup"};
  if (!kinds.count(est)) invalid("params.estimator", "expected pathwise, integrated, both, local or semigroup");
  const HProfile h = profile_from(r);
  const double radius = r.number("radius", 0.0);
  const long long n_inner = r.integer("n_inner", 0);
  if (est == "local" && !(radius > 0.0)) invalid("params.radius", "local estimator needs a positive radius");
  if (n_inner < 0) invalid("params.n_inner", "must be non-negative");
  r.finish();
  const McConfig mc = mc_from(ctx.cfg.mc, 2);
  auto push = [&](const std::string& name, const VectorEstimate& e) {
    json j;
    j["name"] = name;
    j["kind"] = "vector_estimate";
    j["estimate"] = vector_estimate_json(e);
    j["norm"] = estimate_to_json(e.norm());
    ctx.out->results.push_back(j);
  };
  if (est == "semigroup") {
    guarded(ctx, "semigroup", [&] {
      json j;
      j["name"] = "semigroup";
      j["kind"] = "estimate";
      j["estimate"] = estimate_to_json(semigroup(ctx.flow, f, s, t, x, mc));
      ctx.out->results.push_back(j);
    });
  } else if (est == "both") {
    guarded(ctx, "bismut_both", [&] {
      const BismutPair b = bismut_both(ctx.flow, f, s, t, x, Mat(), mc);
      push("bismut_pathwise", b.pathwise);
      push("bismut_integrated", b.integrated);
      json j;
      j["name"] = "estimator_gap";
      j["kind"] = "estimate";
      j["estimate"] = estimate_to_json(b.gap_norm);
      ctx.out->results.push_back(j);
    });
  } else if (est == "pathwise") {
    guarded(ctx, "bismut_pathwise", [&] { push("bismut_pathwise", bismut_pathwise(ctx.flow, f, s, t, x, Mat(), mc)); });
  } else if (est == "integrated") {
    guarded(ctx, "bismut_integrated",
            [&] { push("bismut_integrated", bismut_integrated(ctx.flow, f, s, t, x, Mat(), h, mc)); });
  } else {
    guarded(ctx, "bismut_local", [&] {
      LocalOptions lo;
      lo.radius = radius;
      lo.n_inner = static_cast<std::size_t>(n_inner);
      const LocalEstimate le = bismut_local(ctx.flow, f, s, t, x, Mat(), lo, mc);
      push("bismut_local", le.estimate);
      ctx.out->diagnostics.push_back(diag("local_exits", static_cast<double>(le.exits)));
      ctx.out->diagnostics.push_back(diag("local_incomplete", static_cast<double>(le.incomplete)));
      ctx.out->diagnostics.push_back(diag("nested_bias_delta", le.nested_bias_delta));
    });
  }
}

void run_couple(Context& ctx) {
  Reader r(ctx.cfg.params, "params");
  const double s = r.number("s", 0.0);
  const double t = r.number("t");
  if (!(t > s)) invalid("params.t", "must exceed s");
  const Vec x = point(r, "x", ctx.flow);
  const Vec y = point(r, "y", ctx.flow);
  if ((x - y).norm() == 0.0) invalid("params.y", "must differ from x");
  const std::string mode = r.text("mode", "mirror");
  if (mode != "mirror" && mode != "parallel") invalid("params.mode", "expected mirror or parallel");
  CouplingOptions opts;
  opts.mode = mode == "mirror" ? CouplingMode::Mirror : CouplingMode::Parallel;
  if (r.has("U")) {
    const json& u = r.raw("U");
    if (!u.is_null()) {
      Reader ur(u, "params.U");
      opts.U = ExtraDrift::contract(ur.number("contract"));
      ur.finish();
    }
  }
  opts.delta_couple = r.number("delta_couple", opts.delta_couple);
  if (!(opts.delta_couple >= 0.0)) invalid("params.delta_couple", "must be non-negative");
  const long long rec = r.integer("record_paths", 50);
  if (rec < 0) invalid("params.record_paths", "must be non-negative");
  opts.record_paths = static_cast<std::size_t>(rec);
  const std::vector<double> ps = r.numbers("p", {1.0});
  for (double p : ps) {
    if (!(p >= 1.0)) invalid("params.p", "exponents must be at least 1");
  }
  const std::vector<double> hits = r.numbers("hit_times", {});
  for (double h : hits) {
    if (!(h > s && h <= t)) invalid("params.hit_times", "times must lie in (s, t]");
  }
  const long long window = r.integer("drift_window", 0);
  if (window < 0) invalid("params.drift_window", "must be non-negative");
  r.finish();

  guarded(ctx, "couple", [&] {
    const McConfig mc = mc_from(ctx.cfg.mc, 3);
    CouplingOptions run_opts = opts;
    if (window > 0) run_opts.record_paths = std::max<std::size_t>(run_opts.record_paths, mc.n_paths);
    const CouplingEnsemble ens = simulate_coupling(ctx.flow, x, y, s, t, mc, run_opts);
    for (double h : hits) {
      json j;
      j["name"] = "coupled_by";
      j["kind"] = "estimate";
      j["time"] = h;
      j["estimate"] = estimate_to_json(ens.coupled_by(h));
      ctx.out->results.push_back(j);
    }
    for (double p : ps) {
      json j;
      j["name"] = "wasserstein_upper";
      j["kind"] = "estimate";
      j["p"] = p;
      j["estimate"] = estimate_to_json(wasserstein_upper(ens, p));
      ctx.out->results.push_back(j);
    }
    if (window > 0) {
      guarded(ctx, "empirical_rho_drift", [&] {
        json j;
        j["name"] = "empirical_rho_drift";
        j["kind"] = "estimate";
        j["window_steps"] = window;
        j["estimate"] = estimate_to_json(empirical_rho_drift(ens, static_cast<int>(window)));
        ctx.out->results.push_back(j);
      });
    }
    guarded(ctx, "rho_drift_bound", [&] {
      json j;
      j["name"] = "rho_drift_bound";
      j["kind"] = "value";
      j["value"] = rho_drift_bound(ctx.flow, s, x, y, opts.U);
      j["index_form"] = index_form(ctx.flow, s, x, y);
      ctx.out->results.push_back(j);
    });
    ctx.out->diagnostics.push_back(diag("regularized_fraction", ens.regularized_fraction));
    Table tab{"coupling", {"path_id", "k", "t", "rho", "coupled_flag", "regularized_flag"}, {}};
    Plot plot{"coupling_rho", "t", "rho", {}};
    for (std::size_t i = 0; i < ens.paths.size(); ++i) {
      const CouplingPath& p = ens.paths[i];
      if (p.rho.empty() || i >= opts.record_paths) continue;
      std::vector<std::pair<double, double>> line;
      for (std::size_t k = 0; k < p.rho.size(); ++k) {
        const double tk = ens.grid.time(static_cast<int>(k));
        const bool coupled = p.T0 && *p.T0 <= tk + 1e-12;
        const double reg = k == 0 ? 0.0 : double(p.regularized[k - 1]);
        tab.rows.push_back({double(i), double(k), tk, p.rho[k], coupled ? 1.0 : 0.0, reg});
        line.emplace_back(tk, p.rho[k]);
      }
      plot.lines.push_back(std::move(line));
    }
    ctx.out->tables.push_back(std::move(tab));
    ctx.out->plots.push_back(std::move(plot));
  });
}

void run_verify(Context& ctx) {
  Reader r(ctx.cfg.params, "params");
  const json& checks = r.raw("checks");
  const CurvatureData K_default = curvature_from(r, ctx.flow);
  r.finish();
  if (!checks.is_array()) invalid("params.checks", "expected an array");
  for (std::size_t i = 0; i < checks.size(); ++i) {
    const std::string path = "params.checks[" + std::to_string(i) + "]";
    Reader c(checks[i], path);
    const std::string kind = c.text("inequality");
    static const std::set<std::string> kinds{"gradient", "entropy", "reverse", "harnack", "log_harnack", "hyperbound",
                                             "contraction"};
    if (!kinds.count(kind)) invalid(path + ".inequality", "unknown inequality");
    const CurvatureData K = c.has("K") ? curvature_from(c, ctx.flow) : K_default;
    const double s = c.number("s", 0.0);
    const double t = c.number("t");
    if (!(t >= s)) invalid(path + ".t", "must not precede s");
    const Vec x = point(c, "x", ctx.flow);
    const bool needs_f = kind != "contraction";
    const bool needs_y = kind == "harnack" || kind == "log_harnack" || kind == "contraction";
    std::optional<ScalarField> f;
    if (needs_f) f = field_from_json(ctx.flow, c.raw("f"), path + ".f");
    Vec y = x;
    if (needs_y) y = point(c, "y", ctx.flow);
    const double p = c.number("p", kind == "harnack" ? 2.0 : 1.0);
    if (kind == "harnack" && !(p > 1.0)) invalid(path + ".p", "must exceed 1");
    if (!(p >= 1.0) && kind != "hyperbound") invalid(path + ".p", "must be at least 1");
    HyperboundConfig hc;
    NestedOptions nested;
    nested.n_inner = static_cast<std::size_t>(c.integer("n_inner", 500));
    if (kind == "hyperbound") {
      hc.s = s;
      hc.t = t;
      hc.K = K;
      hc.q1 = c.number("q1", 2.0);
      hc.q2 = c.number("q2", 3.0);
      if (c.has("r")) {
        hc.r = c.number("r");
      } else {
        try {
          hc.r = solve_q_relation_time(s, t, hc.q1, hc.q2, K);
        } catch (const Error& e) {
          invalid(path, e.what());
        }
      }
    } else if (c.has("r") || c.has("q1") || c.has("q2")) {
      invalid(path, "r, q1 and q2 belong to hyperbound checks");
    }
    c.finish();
    const std::string name = "check_" + std::to_string(i) + "_" + kind;
    McConfig mc = mc_from(ctx.cfg.mc, 100 + i);
    guarded(ctx, name, [&] {
      Verdict v;
      if (kind == "gradient") v = verify_gradient_inequality(ctx.flow, *f, s, t, x, p, K, mc);
      else if (kind == "entropy") v = verify_entropy_bound(ctx.flow, *f, s, t, x, p, K, mc);
      else if (kind == "reverse") v = verify_reverse_bound(ctx.flow, *f, s, t, x, p, K, mc, nested);
      else if (kind == "harnack") v = verify_harnack(ctx.flow, *f, s, t, x, y, p, K, mc);
      else if (kind == "log_harnack") v = verify_log_harnack(ctx.flow, *f, s, t, x, y, K, mc);
      else if (kind == "hyperbound") v = verify_hyperbound(ctx.flow, *f, x, hc, mc, nested);
      else v = verify_contraction(ctx.flow, x, y, s, t, p, K, mc);
      ctx.out->results.push_back(verdict_to_json(v));
      for (const auto& [k, val] : v.diagnostics) ctx.out->diagnostics.push_back(diag(name + "." + k, val));
    });
  }
}

void run_nonexplosion(Context& ctx) {
  Reader r(ctx.cfg.params, "params");
  NonexplosionSpec spec;
  const std::string variant = r.text("variant", "theorem");
  if (variant == "theorem") spec.variant = NonexplosionSpec::Variant::Theorem;
  else if (variant == "case1") spec.variant = NonexplosionSpec::Variant::Case1;
  else if (variant == "case2") spec.variant = NonexplosionSpec::Variant::Case2;
  else invalid("params.variant", "expected theorem, case1 or case2");
  if (r.has("psi")) spec.psi = function_from_json(r.raw("psi"), "params.psi");
  if (r.has("phi")) spec.phi = function_from_json(r.raw("phi"), "params.phi");
  if (r.has("h")) spec.h = function_from_json(r.raw("h"), "params.h");
  if (r.has("radial")) {
    const auto radial = function_from_json(r.raw("radial"), "params.radial");
    spec.radial = [radial](double, double rho) { return radial(rho); };
  }
  spec.R_max = r.number("R_max", 200.0);
  if (!(spec.R_max > 1.0)) invalid("params.R_max", "must exceed 1");
  const long long points = r.integer("points", 200);
  if (points < 2) invalid("params.points", "must be at least 2");
  spec.dim = static_cast<int>(r.integer("dim", ctx.flow.dim()));
  spec.horizon = std::min(ctx.flow.horizon(), r.number("horizon", 1.0));
  r.finish();
  if (spec.variant != NonexplosionSpec::Variant::Case1 && !spec.psi) invalid("params.psi", "required");
  if (spec.variant != NonexplosionSpec::Variant::Theorem && !spec.phi) invalid("params.phi", "required");
  guarded(ctx, "nonexplosion", [&] {
    const NonexplosionReport rep = nonexplosion_check(spec);
    json j;
    j["name"] = "nonexplosion";
    j["kind"] = "report";
    j["variant"] = rep.variant;
    j["nonnegative"] = rep.nonnegative;
    j["hypothesis_holds"] = rep.hypothesis_holds;
    j["violations"] = rep.violations;
    j["classification"] = rep.growth.classification;
    j["tail_exponent"] = rep.growth.tail_exponent;
    j["ratio"] = rep.growth.ratio;
    j["F_R_max"] = rep.growth.F.back();
    j["F_2R_max"] = rep.growth.F_double;
    j["established"] = rep.established;
    ctx.out->results.push_back(j);
    Table tab{"grigoryan", {"R", "F"}, {}};
    Plot plot{"grigoryan_F", "R", "F", {{}}};
    const GrowthReport& use = rep.growth;
    const std::size_t stride = std::max<std::size_t>(1, use.R.size() / static_cast<std::size_t>(points));
    for (std::size_t k = 0; k < use.R.size(); k += stride) {
      tab.rows.push_back({use.R[k], use.F[k]});
      plot.lines[0].emplace_back(use.R[k], use.F[k]);
    }
    ctx.out->tables.push_back(std::move(tab));
    ctx.out->plots.push_back(std::move(plot));
  });
}

void run_recover(Context& ctx) {
  Reader r(ctx.cfg.params, "params");
  RecoveryOptions o;
  const double s = r.number("s", 0.0);
  const Vec x = point(r, "x", ctx.flow);
  const Vec X = r.vector("X");
  if (X.size() != ctx.flow.dim()) invalid("params.X", "expected " + std::to_string(ctx.flow.dim()) + " components");
  o.t1 = r.number("t1", o.t1);
  if (!(o.t1 > 0.0)) invalid("params.t1", "must be positive");
  o.steps = static_cast<int>(r.integer("steps", o.steps));
  if (o.steps < 4 || o.steps % 4) invalid("params.steps", "must be a positive multiple of 4");
  o.p_grad = r.number("p_grad", o.p_grad);
  o.p_var = r.number("p_var", o.p_var);
  if (!(o.p_grad >= 1.0)) invalid("params.p_grad", "must be at least 1");
  if (!(o.p_var > 1.0)) invalid("params.p_var", "must exceed 1");
  o.shift = r.number("shift", o.shift);
  o.cutoff = r.number("cutoff", o.cutoff);
  o.control_variate = r.boolean("control_variate", o.control_variate);
  o.batches = static_cast<std::size_t>(r.integer("batches", static_cast<long long>(o.batches)));
  r.finish();
  o.n_paths = ctx.cfg.mc.n_paths;
  o.seed = ctx.cfg.mc.seed;
  o.task = 4;
  guarded(ctx, "recover", [&] {
    // Tangent vector from coordinates in the base-orthonormal basis at x.
    const Vec v = ctx.flow.orthonormal_frame(s, x) * X;
    const RecoveryBundle b = curvature_recover(ctx.flow, s, x, v, o);
    for (const RecoveryResult* res : {&b.grad, &b.variance, &b.entropy}) {
      json j;
      j["name"] = "recover_" + res->formula;
      j["kind"] = "estimate";
      j["estimate"] = estimate_to_json(res->value);
      j["at_t1"] = estimate_to_json(res->at_t1);
      j["at_t2"] = estimate_to_json(res->at_t2);
      j["half_grid"] = estimate_to_json(res->half_grid);
      j["shifted_2n"] = estimate_to_json(res->shifted_2n);
      j["below_noise"] = res->below_noise;
      ctx.out->results.push_back(j);
    }
  });
}

void dispatch(Context& ctx) {
  const std::string& task = ctx.cfg.task;
  if (task == "simulate") run_simulate(ctx);
  else if (task == "gradient") run_gradient(ctx);
  else if (task == "couple") run_couple(ctx);
  else if (task == "verify") run_verify(ctx);
  else if (task == "nonexplosion") run_nonexplosion(ctx);
  else if (task == "recover") run_recover(ctx);
  else invalid("task", "unknown task");
}

void validate_params(const ExperimentConfig& cfg, const MetricFlow& flow) {
  Context ctx{cfg, flow, nullptr};
  dispatch(ctx);
}

std::string csv_number(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

ReportBundle run_experiment(const ExperimentConfig& cfg) {
  const MetricFlow flow = cfg.flow.build();
  ReportBundle bundle;
  bundle.version = library_version();
  bundle.config = cfg;
  bundle.created = now_text();
  Context ctx{cfg, flow, &bundle};
  dispatch(ctx);
  return bundle;
}

std::string table_to_csv(const Table& table) {
  std::string out;
  for (std::size_t i = 0; i < table.header.size(); ++i) out += (i ? "," : "") + table.header[i];
  out += "\n";
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out += (i ? "," : "") + csv_number(row[i]);
    out += "\n";
  }
  return out;
}

std::string plot_to_svg(const Plot& plot, std::size_t max_lines) {
  const double W = 640, H = 400, M = 50;
  double x0 = kInf, x1 = -kInf, y0 = kInf, y1 = -kInf;
  const std::size_t n = std::min(max_lines, plot.lines.size());
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& [x, y] : plot.lines[i]) {
      x0 = std::min(x0, x), x1 = std::max(x1, x);
      y0 = std::min(y0, y), y1 = std::max(y1, y);
    }
  }
  if (!(x1 > x0)) x0 = 0.0, x1 = 1.0;
  if (!(y1 > y0)) y1 = y0 + 1.0;
  auto px = [&](double x) { return M + (x - x0) / (x1 - x0) * (W - 2 * M); };
  auto py = [&](double y) { return H - M - (y - y0) / (y1 - y0) * (H - 2 * M); };
  std::ostringstream os;
  os.precision(6);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
     << " " << H << "\">\n";
  os << "<title>" << plot.name << "</title>\n";
  os << "<rect x=\"0\" y=\"0\" width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
  os << "<line x1=\"" << M << "\" y1=\"" << H - M << "\" x2=\"" << W - M << "\" y2=\"" << H - M
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << M << "\" y1=\"" << M << "\" x2=\"" << M << "\" y2=\"" << H - M << "\" stroke=\"black\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">" << plot.x_label << " ["
     << x0 << ", " << x1 << "]</text>\n";
  os << "<text x=\"15\" y=\"" << H / 2 << "\" transform=\"rotate(-90 15 " << H / 2 << ")\" text-anchor=\"middle\">"
     << plot.y_label << " [" << y0 << ", " << y1 << "]</text>\n";
  for (std::size_t i = 0; i < n; ++i) {
    os << "<polyline fill=\"none\" stroke=\"hsl(" << (i * 47) % 360 << ",60%,40%)\" stroke-width=\"1\" points=\"";
    for (const auto& [x, y] : plot.lines[i]) os << px(x) << "," << py(y) << " ";
    os << "\"/>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::vector<std::string> emit_report(const ReportBundle& bundle, const std::string& directory,
                                     const std::vector<std::string>& formats) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(directory, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + directory + ": " + ec.message());
  std::vector<std::string> written;
  auto write = [&](const std::string& name, const std::string& content) {
    const fs::path p = fs::path(directory) / name;
    std::ofstream out(p, std::ios::binary);
    out << content;
    out.close();
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + p.string());
    written.push_back(p.string());
  };
  auto wants = [&](const std::string& f) { return std::find(formats.begin(), formats.end(), f) != formats.end(); };
  if (wants("json")) write("report.json", bundle.to_json().dump(2) + "\n");
  if (wants("csv")) {
    for (const auto& t : bundle.tables) write(t.name + ".csv", table_to_csv(t));
  }
  if (wants("svg")) {
    for (const auto& p : bundle.plots) write(p.name + ".svg", plot_to_svg(p));
  }
  return written;
}

}  // namespace mfl
