#include "gstop/cli.hpp"

#include <openssl/evp.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "gstop/horizon.hpp"
#include "gstop/oracle.hpp"
#include "gstop/refine.hpp"

#ifndef GSTOP_VERSION
#define GSTOP_VERSION "0.0.0"
#endif

namespace gstop::cli {

using nlohmann::json;
namespace fs = std::filesystem;

const char* engine_version() { return GSTOP_VERSION; }

ConfigError::ConfigError(std::string f, const std::string& message)
    : std::runtime_error(f + ": " + message), field(std::move(f)) {}

std::string to_string(Kind k) {
  switch (k) {
    case Kind::snell_finite: return "snell_finite";
    case Kind::snell_infinite: return "snell_infinite";
    case Kind::dyadic: return "dyadic";
    case Kind::obstacle: return "obstacle";
    case Kind::oracle: return "oracle";
    case Kind::regression: return "regression";
  }
  return "?";
}

Kind kind_from_string(const std::string& s) {
  for (Kind k : {Kind::snell_finite, Kind::snell_infinite, Kind::dyadic, Kind::obstacle, Kind::oracle,
                 Kind::regression})
    if (to_string(k) == s) return k;
  throw ConfigError("kind", "unknown problem kind '" + s + "'");
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

const json& member(const json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object()) throw ConfigError(path, "expected an object");
  const auto it = obj.find(key);
  if (it == obj.end()) throw ConfigError(path.empty() ? key : path + "." + key, "required field missing");
  return *it;
}

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

double req_number(const json& obj, const std::string& key, const std::string& path) {
  const json& v = member(obj, key, path);
  if (!v.is_number()) throw ConfigError(join(path, key), "expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw ConfigError(join(path, key), "must be finite");
  return d;
}

double opt_number(const json& obj, const std::string& key, const std::string& path, double fallback) {
  return obj.contains(key) ? req_number(obj, key, path) : fallback;
}

long long req_int(const json& obj, const std::string& key, const std::string& path) {
  const json& v = member(obj, key, path);
  if (!v.is_number_integer()) throw ConfigError(join(path, key), "expected an integer");
  return v.get<long long>();
}

long long opt_int(const json& obj, const std::string& key, const std::string& path, long long fallback) {
  return obj.contains(key) ? req_int(obj, key, path) : fallback;
}

std::string req_string(const json& obj, const std::string& key, const std::string& path) {
  const json& v = member(obj, key, path);
  if (!v.is_string()) throw ConfigError(join(path, key), "expected a string");
  return v.get<std::string>();
}

std::vector<double> req_array(const json& obj, const std::string& key, const std::string& path) {
  const json& v = member(obj, key, path);
  if (!v.is_array() || v.empty()) throw ConfigError(join(path, key), "expected a non-empty array of numbers");
  std::vector<double> out;
  for (const auto& e : v) {
    if (!e.is_number()) throw ConfigError(join(path, key), "expected a non-empty array of numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

void only_keys(const json& obj, const std::set<std::string>& allowed, const std::string& path) {
  for (const auto& [k, _] : obj.items())
    if (!allowed.count(k)) throw ConfigError(join(path, k), "unknown field");
}

int checked_int(long long v, long long lo, long long hi, const std::string& field) {
  if (v < lo || v > hi) {
    std::ostringstream os;
    os << "must lie in [" << lo << ", " << hi << "], got " << v;
    throw ConfigError(field, os.str());
  }
  return static_cast<int>(v);
}

bool uses_lattice(const DynamicsConfig& d) { return d.type == "g_brownian"; }

void validate_semantics(const ProblemConfig& c) {
  if (c.kind == Kind::regression) return;
  try {
    VolatilityBand::make(c.band.sigma2_min, c.band.sigma2_max);
  } catch (const ModelError& e) {
    throw ConfigError("band", e.what());
  }
  if (!(c.grid.dx > 0.0)) throw ConfigError("grid.dx", "must be positive");

  const bool lattice = uses_lattice(c.dynamics);
  if (lattice && !(c.dynamics.dt > 0.0)) throw ConfigError("dynamics.dt", "must be positive");
  if (!lattice && !(c.dynamics.period > 0.0)) throw ConfigError("dynamics.period", "must be positive");

  switch (c.kind) {
    case Kind::oracle:
      if (!lattice) throw ConfigError("dynamics.type", "oracle runs need the g_brownian lattice");
      break;
    case Kind::snell_infinite:
    case Kind::dyadic:
    case Kind::obstacle:
      if (lattice)
        throw ConfigError("dynamics.type", to_string(c.kind) + " needs G-SDE dynamics, not g_brownian");
      break;
    default: break;
  }
  if (c.kind == Kind::snell_infinite) {
    if (c.payoff.type == "sequence") throw ConfigError("payoff.type", "infinite horizon needs a Markov payoff");
    if (c.payoff.rate != 0.0) throw ConfigError("payoff.rate", "infinite horizon discounts through iteration.discount");
    if (c.iteration.discount == 1.0 && c.grid.boundary != Boundary::absorbing)
      throw ConfigError("iteration.discount", "undiscounted runs need grid.boundary = absorbing");
  }
  if (c.kind == Kind::dyadic && c.level_min > c.level_max)
    throw ConfigError("levels.min", "must not exceed levels.max");

  try {
    const Kernel k = build_kernel(c);
    validate_kernel(k);
  } catch (const StabilityError& e) {
    throw ConfigError(lattice ? "dynamics.dt" : "dynamics.substeps", e.what());
  } catch (const ConfigError&) {
    throw;
  } catch (const ModelError& e) {
    throw ConfigError(lattice ? "dynamics.dt" : "dynamics", e.what());
  }
}

}  // namespace

ProblemConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("(root)", "expected a JSON object");
  ProblemConfig c;
  c.kind = kind_from_string(req_string(j, "kind", ""));
  c.output_dir = req_string(j, "output_dir", "");
  if (c.output_dir.empty()) throw ConfigError("output_dir", "must not be empty");
  const long long seed = opt_int(j, "seed", "", 0);
  if (seed < 0) throw ConfigError("seed", "must be non-negative");
  c.seed = static_cast<std::uint64_t>(seed);
  if (c.kind == Kind::regression) {
    only_keys(j, {"kind", "output_dir", "seed"}, "");
    return c;
  }

  std::set<std::string> allowed{"kind", "output_dir", "seed", "band", "grid", "dynamics", "payoff"};

  const json& band = member(j, "band", "");
  only_keys(band, {"sigma2_min", "sigma2_max"}, "band");
  c.band.sigma2_min = req_number(band, "sigma2_min", "band");
  c.band.sigma2_max = req_number(band, "sigma2_max", "band");

  const json& grid = member(j, "grid", "");
  only_keys(grid, {"x0", "dx", "half_width", "boundary"}, "grid");
  c.grid.x0 = req_number(grid, "x0", "grid");
  c.grid.dx = req_number(grid, "dx", "grid");
  c.grid.half_width = checked_int(req_int(grid, "half_width", "grid"), 1, 1000000, "grid.half_width");
  try {
    c.grid.boundary = boundary_from_string(req_string(grid, "boundary", "grid"));
  } catch (const ModelError& e) {
    throw ConfigError("grid.boundary", e.what());
  }

  const json& dyn = member(j, "dynamics", "");
  c.dynamics.type = req_string(dyn, "type", "dynamics");
  const std::string& t = c.dynamics.type;
  if (t == "g_brownian") {
    only_keys(dyn, {"type", "dt"}, "dynamics");
    c.dynamics.dt = req_number(dyn, "dt", "dynamics");
  } else {
    std::set<std::string> keys{"type", "period", "substeps"};
    if (t == "geometric") {
      keys.insert({"mu", "sigma"});
      c.dynamics.params = {req_number(dyn, "mu", "dynamics"), req_number(dyn, "sigma", "dynamics")};
    } else if (t == "affine") {
      keys.insert({"b0", "b1", "h0", "h1", "s0", "s1"});
      for (const char* k : {"b0", "b1", "h0", "h1", "s0", "s1"})
        c.dynamics.params.push_back(req_number(dyn, k, "dynamics"));
    } else if (t == "table") {
      keys.insert({"x", "b", "h", "sigma"});
      c.dynamics.table_x = req_array(dyn, "x", "dynamics");
      c.dynamics.table_b = req_array(dyn, "b", "dynamics");
      c.dynamics.table_h = req_array(dyn, "h", "dynamics");
      c.dynamics.table_sigma = req_array(dyn, "sigma", "dynamics");
    } else {
      throw ConfigError("dynamics.type", "unknown dynamics '" + t + "' (g_brownian, geometric, affine, table)");
    }
    only_keys(dyn, keys, "dynamics");
    c.dynamics.period = req_number(dyn, "period", "dynamics");
    c.dynamics.substeps = checked_int(opt_int(dyn, "substeps", "dynamics", 0), 0, 1 << 24, "dynamics.substeps");
  }

  const json& pay = member(j, "payoff", "");
  c.payoff.type = req_string(pay, "type", "payoff");
  const std::string& pt = c.payoff.type;
  if (pt == "put" || pt == "call") {
    only_keys(pay, {"type", "strike", "rate"}, "payoff");
    c.payoff.strike = req_number(pay, "strike", "payoff");
    c.payoff.rate = opt_number(pay, "rate", "payoff", 0.0);
  } else if (pt == "constant") {
    only_keys(pay, {"type", "value"}, "payoff");
    c.payoff.value = req_number(pay, "value", "payoff");
  } else if (pt == "sequence") {
    only_keys(pay, {"type", "values"}, "payoff");
    c.payoff.values = req_array(pay, "values", "payoff");
  } else if (pt == "quadratic") {
    only_keys(pay, {"type"}, "payoff");
  } else {
    throw ConfigError("payoff.type", "unknown payoff '" + pt + "' (put, call, constant, sequence, quadratic)");
  }

  switch (c.kind) {
    case Kind::snell_finite:
    case Kind::oracle:
      allowed.insert({"steps", "sense"});
      c.steps = checked_int(req_int(j, "steps", ""), 0, c.kind == Kind::oracle ? 4 : 1000000, "steps");
      c.sense = j.contains("sense") ? req_string(j, "sense", "") : "sup";
      if (c.sense != "sup" && c.sense != "inf") throw ConfigError("sense", "must be 'sup' or 'inf'");
      break;
    case Kind::snell_infinite: {
      allowed.insert("iteration");
      const json& it = member(j, "iteration", "");
      only_keys(it, {"tol", "max_iter", "discount", "envelope_levels"}, "iteration");
      c.iteration.tol = req_number(it, "tol", "iteration");
      c.iteration.max_iter = checked_int(req_int(it, "max_iter", "iteration"), 1, 100000000, "iteration.max_iter");
      c.iteration.discount = req_number(it, "discount", "iteration");
      c.iteration.envelope_levels = checked_int(opt_int(it, "envelope_levels", "iteration", 0), 0,
                                               kEnvelopeLevelCap, "iteration.envelope_levels");
      if (!(c.iteration.tol > 0.0)) throw ConfigError("iteration.tol", "must be positive");
      if (!(c.iteration.discount > 0.0 && c.iteration.discount <= 1.0))
        throw ConfigError("iteration.discount", "must lie in (0, 1]");
      break;
    }
    case Kind::dyadic: {
      allowed.insert("levels");
      const json& lv = member(j, "levels", "");
      only_keys(lv, {"min", "max"}, "levels");
      c.level_min = checked_int(req_int(lv, "min", "levels"), 0, 16, "levels.min");
      c.level_max = checked_int(req_int(lv, "max", "levels"), 0, 16, "levels.max");
      break;
    }
    case Kind::obstacle: {
      allowed.insert("obstacle");
      const json& ob = member(j, "obstacle", "");
      only_keys(ob, {"time_steps", "substeps"}, "obstacle");
      c.time_steps = checked_int(req_int(ob, "time_steps", "obstacle"), 1, 1 << 20, "obstacle.time_steps");
      c.obstacle_substeps = checked_int(opt_int(ob, "substeps", "obstacle", 0), 0, 1 << 20, "obstacle.substeps");
      break;
    }
    case Kind::regression: break;
  }
  only_keys(j, allowed, "");
  validate_semantics(c);
  return c;
}

json to_json(const ProblemConfig& c) {
  json j{{"kind", to_string(c.kind)}, {"output_dir", c.output_dir}, {"seed", c.seed}};
  if (c.kind == Kind::regression) return j;
  j["band"] = {{"sigma2_min", c.band.sigma2_min}, {"sigma2_max", c.band.sigma2_max}};
  j["grid"] = {{"x0", c.grid.x0},
               {"dx", c.grid.dx},
               {"half_width", c.grid.half_width},
               {"boundary", gstop::to_string(c.grid.boundary)}};
  const auto& d = c.dynamics;
  json dyn{{"type", d.type}};
  if (d.type == "g_brownian") {
    dyn["dt"] = d.dt;
  } else {
    dyn["period"] = d.period;
    dyn["substeps"] = d.substeps;
    if (d.type == "geometric") {
      dyn["mu"] = d.params.at(0);
      dyn["sigma"] = d.params.at(1);
    } else if (d.type == "affine") {
      const char* names[] = {"b0", "b1", "h0", "h1", "s0", "s1"};
      for (int k = 0; k < 6; ++k) dyn[names[k]] = d.params.at(static_cast<std::size_t>(k));
    } else {
      dyn["x"] = d.table_x;
      dyn["b"] = d.table_b;
      dyn["h"] = d.table_h;
      dyn["sigma"] = d.table_sigma;
    }
  }
  j["dynamics"] = dyn;
  const auto& p = c.payoff;
  json pay{{"type", p.type}};
  if (p.type == "put" || p.type == "call") {
    pay["strike"] = p.strike;
    pay["rate"] = p.rate;
  } else if (p.type == "constant") {
    pay["value"] = p.value;
  } else if (p.type == "sequence") {
    pay["values"] = p.values;
  }
  j["payoff"] = pay;
  switch (c.kind) {
    case Kind::snell_finite:
    case Kind::oracle:
      j["steps"] = c.steps;
      j["sense"] = c.sense;
      break;
    case Kind::snell_infinite:
      j["iteration"] = {{"tol", c.iteration.tol},
                        {"max_iter", c.iteration.max_iter},
                        {"discount", c.iteration.discount},
                        {"envelope_levels", c.iteration.envelope_levels}};
      break;
    case Kind::dyadic: j["levels"] = {{"min", c.level_min}, {"max", c.level_max}}; break;
    case Kind::obstacle:
      j["obstacle"] = {{"time_steps", c.time_steps}, {"substeps", c.obstacle_substeps}};
      break;
    case Kind::regression: break;
  }
  return j;
}

ProblemConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("(file)", "cannot read " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("(file)", std::string("malformed JSON: ") + e.what());
  }
  return config_from_json(j);
}

// ---------------------------------------------------------------------------
// Model construction

namespace {

GsdeCoefficients build_coefficients(const DynamicsConfig& d) {
  if (d.type == "geometric") return GsdeCoefficients::geometric(d.params.at(0), d.params.at(1));
  if (d.type == "affine") {
    const auto& p = d.params;
    return GsdeCoefficients::affine(p.at(0), p.at(1), p.at(2), p.at(3), p.at(4), p.at(5));
  }
  if (d.type == "table") return GsdeCoefficients::table(d.table_x, d.table_b, d.table_h, d.table_sigma);
  throw ConfigError("dynamics.type", "not a G-SDE built-in: " + d.type);
}

Grid build_grid(const GridConfig& g) {
  Grid out;
  out.x0 = g.x0;
  out.dx = g.dx;
  out.half_width = g.half_width;
  out.boundary = g.boundary;
  return out;
}

// Explicit substeps, or the smallest stable power of two that is also a
// multiple of 2^min_pow.
TransitionSpec transition_with(const ProblemConfig& c, int min_pow) {
  const auto band = VolatilityBand::make(c.band.sigma2_min, c.band.sigma2_max);
  const Grid grid = build_grid(c.grid);
  const auto coeffs = build_coefficients(c.dynamics);
  if (c.dynamics.substeps > 0) return TransitionSpec{coeffs, band, c.dynamics.period, c.dynamics.substeps, grid};
  auto spec = TransitionSpec::with_stable_substeps(coeffs, band, c.dynamics.period, grid);
  spec.substeps = std::max(spec.substeps, 1 << min_pow);
  return spec;
}

}  // namespace

TransitionSpec build_transition(const ProblemConfig& c) {
  int min_pow = 0;
  if (c.kind == Kind::dyadic) min_pow = c.level_max;
  if (c.kind == Kind::snell_infinite) min_pow = c.iteration.envelope_levels;
  return transition_with(c, min_pow);
}

Kernel build_kernel(const ProblemConfig& c) {
  if (uses_lattice(c.dynamics)) {
    LatticeModel m;
    m.grid = build_grid(c.grid);
    m.dt = c.dynamics.dt;
    m.n_steps = std::max(c.steps, 1);
    m.band = VolatilityBand::make(c.band.sigma2_min, c.band.sigma2_max);
    return m;
  }
  return build_transition(c);
}

PayoffSpec build_payoff(const ProblemConfig& c) {
  const auto& p = c.payoff;
  if (p.type == "constant") {
    const double v = p.value;
    return PayoffSpec::markov_payoff([v](double) { return v; });
  }
  if (p.type == "sequence") return PayoffSpec::sequence(p.values);
  if (p.type == "quadratic") return PayoffSpec::markov_payoff([](double x) { return x * x; });
  const double k = p.strike, r = p.rate;
  const bool is_put = p.type == "put";
  auto intrinsic = [k, is_put](double x) { return std::max(is_put ? k - x : x - k, 0.0); };
  if (r == 0.0) return PayoffSpec::markov_payoff(intrinsic);
  return PayoffSpec::adapted([intrinsic, r](int, double t, double x) { return std::exp(-r * t) * intrinsic(x); });
}

fs::path resolve_output_dir(const ProblemConfig& c) {
  fs::path dir(c.output_dir);
  if (dir.is_relative()) {
    if (const char* root = std::getenv("GSTOP_OUTPUT_ROOT"); root && *root) dir = fs::path(root) / dir;
  }
  return dir;
}

// ---------------------------------------------------------------------------
// Output helpers

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx, data.data(), data.size()) != 1 || EVP_DigestFinal_ex(ctx, md, &len) != 1) {
    EVP_MD_CTX_free(ctx);
    throw std::runtime_error("sha256 failed");
  }
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

namespace {

std::string value_csv(const ValueSurface& s) {
  std::ostringstream os;
  os << "step,time,node,state,value,payoff\n";
  for (std::size_t n = 0; n < s.values.size(); ++n)
    for (std::size_t j = 0; j < s.grid.size(); ++j)
      os << n << ',' << format_double(n * s.step_time) << ',' << j << ',' << format_double(s.grid.state(j))
         << ',' << format_double(s.values[n][j]) << ',' << format_double(s.payoff[n][j]) << '\n';
  return os.str();
}

std::string region_csv(const StoppingRegion& r, const Grid& g, double step_time) {
  std::ostringstream os;
  os << "step,time,node,state,stop\n";
  for (std::size_t n = 0; n < r.stop.size(); ++n)
    for (std::size_t j = 0; j < g.size(); ++j)
      os << n << ',' << format_double(n * step_time) << ',' << j << ',' << format_double(g.state(j)) << ','
         << (r.stop[n][j] ? 1 : 0) << '\n';
  return os.str();
}

json check(double value, double tolerance, bool passed) {
  return {{"value", value}, {"tolerance", tolerance}, {"passed", passed}};
}

json check_below(double value, double tolerance) { return check(value, tolerance, value < tolerance); }

double rel_err(double a, double ref) { return std::abs(a - ref) / std::max(std::abs(ref), 1e-300); }

using Clock = std::chrono::steady_clock;

struct Timer {
  std::map<std::string, double> seconds;
  template <class F>
  auto time(const std::string& stage, F&& f) {
    const auto t0 = Clock::now();
    auto out = f();
    seconds[stage] += std::chrono::duration<double>(Clock::now() - t0).count();
    return out;
  }
};

struct Artifacts {
  json report;
  std::string value;
  std::string region;
  std::string extra_name, extra;
  int exit_code = kOk;
  std::string message;
};

bool geometric_put_reference(const ProblemConfig& c, double& sigma, double& rate) {
  if (c.dynamics.type != "geometric" || c.payoff.type != "put") return false;
  if (c.band.sigma2_min != c.band.sigma2_max) return false;
  if (c.dynamics.params.at(0) != c.payoff.rate) return false;  // risk-neutral drift only
  sigma = std::sqrt(c.band.sigma2_max) * c.dynamics.params.at(1);
  rate = c.payoff.rate;
  return true;
}

Artifacts run_snell_finite(const ProblemConfig& c, Timer& timer) {
  const Kernel kernel = build_kernel(c);
  const PayoffSpec payoff = build_payoff(c);
  const bool sup = c.sense == "sup";
  const SnellResult res =
      timer.time("solve", [&] { return sup ? snell_sup(payoff, kernel, c.steps) : snell_inf(payoff, kernel, c.steps); });
  Artifacts a;
  const auto& s = res.surface;
  a.report["root_value"] = s.root();
  a.report["details"] = {{"sense", c.sense}, {"steps", c.steps}, {"step_time", s.step_time}};
  if (const auto* spec = std::get_if<TransitionSpec>(&kernel)) a.report["details"]["substeps"] = spec->substeps;
  json checks;
  const auto mart = martingale_to_hit_check(res);
  checks["martingale_to_hit"] = check(mart.worst, 1e-12, mart.passed);
  checks["supermartingale_violation"] = check_below(supermartingale_violation(res), 1e-12);
  if (c.band.sigma2_min == c.band.sigma2_max) {
    const auto ref = timer.time("reference", [&] {
      return std::visit([&](const auto& k) { return oracle::classical_snell(payoff, k, c.steps); }, kernel);
    });
    const double r = ref.front()[s.grid.center()];
    a.report["reference"]["classical_snell"] = {{"value", r}, {"relative_error", rel_err(s.root(), r)}};
    checks["classical_reduction"] = check_below(rel_err(s.root(), r), 5e-3);
    double sigma = 0, rate = 0;
    if (sup && geometric_put_reference(c, sigma, rate)) {
      const double crr = oracle::crr_american_put(c.grid.x0, c.payoff.strike, sigma, rate,
                                                  c.steps * s.step_time, c.steps);
      a.report["reference"]["crr"] = {{"value", crr}, {"relative_error", rel_err(s.root(), crr)}};
    }
  }
  a.report["checks"] = checks;
  a.value = value_csv(s);
  a.region = region_csv(res.region, s.grid, s.step_time);
  return a;
}

Artifacts run_snell_infinite(const ProblemConfig& c, Timer& timer) {
  const TransitionSpec spec = build_transition(c);
  const PayoffSpec payoff = build_payoff(c);
  const auto f = [payoff](double x) { return payoff(0, 0.0, x); };
  IterationConfig cfg;
  cfg.tol = c.iteration.tol;
  cfg.max_iter = c.iteration.max_iter;
  cfg.discount = c.iteration.discount;
  const auto vi = timer.time("solve", [&] { return value_iterate(f, spec, cfg); });
  const LatticeFunction fl = LatticeFunction::sample(spec.grid, f);

  Artifacts a;
  a.report["root_value"] = vi.F[spec.grid.center()];
  a.report["details"] = {{"iterations", vi.iterations},
                         {"residual", vi.residual},
                         {"converged", vi.converged},
                         {"min_increment", vi.min_increment},
                         {"discount", cfg.discount},
                         {"substeps", spec.substeps}};
  json checks;
  checks["residual"] = check(vi.residual, cfg.tol, vi.converged);
  checks["monotone_increments"] = check(vi.min_increment, 0.0, vi.min_increment >= 0.0);
  const auto sh = superharmonic_check(vi.F, spec, cfg.discount);
  checks["superharmonic"] = check(sh.gap, 1e-10, sh.passed);
  a.report["details"]["superharmonic_power_gaps"] = sh.power_gaps;

  if (cfg.discount == 1.0) {
    const auto mult = timer.time("multiplicity", [&] { return fixed_point_multiplicity(f, spec, cfg); });
    a.report["details"]["multiplicity"] = {{"gap", mult.gap},
                                           {"multiple", mult.multiple},
                                           {"upper_start_converged", mult.from_above.converged}};
  }
  const StoppingRegion region = stationary_region(vi.F, fl);
  const std::vector<int> horizons{1, 2, 4, 8, 16, 32, 64};
  const auto tail = timer.time("tail", [&] { return admissibility_tail(region, spec, horizons); });
  a.report["details"]["tail"] = {{"horizons", tail.horizons},
                                 {"root_tail", tail.root_tail},
                                 {"max_tail", tail.max_tail},
                                 {"decreasing", tail.decreasing},
                                 {"vanishing", tail.vanishing}};
  if (const int n = c.iteration.envelope_levels; n > 0) {
    const auto env = timer.time("envelope", [&] { return superharmonic_envelope(f, spec, n, cfg.discount); });
    IterationConfig fine = cfg;
    fine.discount = std::pow(cfg.discount, std::ldexp(1.0, -n));
    fine.max_iter = std::max(cfg.max_iter, cfg.max_iter << n);
    const auto matched = timer.time("envelope", [&] { return value_iterate(f, dyadic_substep_spec(spec, n), fine); });
    const double gap = sup_distance(env, matched.F);
    a.report["details"]["envelope"] = {{"levels", n},
                                       {"root_value", env[spec.grid.center()]},
                                       {"matched_value", matched.F[spec.grid.center()]},
                                       {"matched_converged", matched.converged}};
    checks["envelope_agreement"] = check_below(gap, 1e-3);
  }
  a.report["checks"] = checks;

  ValueSurface s;
  s.grid = spec.grid;
  s.step_time = spec.period;
  s.values = {vi.F};
  s.payoff = {fl};
  a.value = value_csv(s);
  a.region = region_csv(region, spec.grid, spec.period);
  if (!vi.converged) {
    a.exit_code = kNotConverged;
    std::ostringstream os;
    os << "value iteration did not converge: residual " << format_double(vi.residual) << " after "
       << vi.iterations << " iterations (tol " << format_double(cfg.tol) << ")";
    a.message = os.str();
  }
  return a;
}

Artifacts run_dyadic(const ProblemConfig& c, Timer& timer) {
  const TransitionSpec spec = build_transition(c);
  const PayoffSpec payoff = build_payoff(c);
  const auto ladder = timer.time("solve", [&] { return dyadic_ladder(payoff, spec, c.level_min, c.level_max); });
  Artifacts a;
  const auto& top = ladder.levels.back();
  a.report["root_value"] = top.root_value;
  json levels = json::array();
  for (const auto& l : ladder.levels)
    levels.push_back({{"level", l.level}, {"dates", 1 << l.level}, {"root_value", l.root_value}});
  json ratios = json::array();
  for (std::size_t k = 1; k < ladder.increments.size(); ++k)
    ratios.push_back(ladder.increments[k - 1] != 0.0 ? ladder.increments[k] / ladder.increments[k - 1] : 0.0);
  a.report["details"] = {{"levels", levels},
                         {"increments", ladder.increments},
                         {"increment_ratios", ratios},
                         {"horizon", ladder.horizon},
                         {"kernel_steps", ladder.kernel_steps}};
  a.report["checks"]["monotone"] = check(ladder.max_violation, 1e-12, ladder.monotone);
  a.value = value_csv(top.result.surface);
  a.region = region_csv(top.result.region, spec.grid, top.result.surface.step_time);
  if (!ladder.monotone) {
    a.exit_code = kInternalFault;
    a.message = "dyadic ladder is not monotone: violation " + format_double(ladder.max_violation);
  }
  return a;
}

Artifacts run_obstacle(const ProblemConfig& c, Timer& timer) {
  const TransitionSpec spec = build_transition(c);
  const PayoffSpec payoff = build_payoff(c);
  ObstacleGrid og;
  og.time_steps = c.time_steps;
  og.horizon = spec.period;
  og.substeps = c.obstacle_substeps;
  const auto sol = timer.time("solve", [&] { return solve_obstacle(payoff, spec, og); });
  const auto hit = timer.time("hitting", [&] { return hitting_time_value_check(sol, payoff, 20, c.seed); });
  Artifacts a;
  a.report["root_value"] = sol.root();
  a.report["details"] = {{"dt", sol.dt},
                         {"dx", sol.dx},
                         {"substeps", sol.substeps},
                         {"time_steps", sol.time_steps},
                         {"consistency_residual", obstacle_consistency_residual(sol, payoff)},
                         {"consistency_residual_first_half",
                          obstacle_consistency_residual(sol, payoff, 0, sol.time_steps / 2)},
                         {"hitting_max_gap", hit.max_gap},
                         {"boundary_rows", sol.boundary.size()}};
  json checks;
  checks["complementarity"] = check_below(sol.complementarity_residual, 1e-10);
  checks["hitting_time_value"] = check(hit.max_gap, hit.tolerance, hit.passed);
  if (c.band.sigma2_min == c.band.sigma2_max) {
    const TransitionSpec level{spec.coeffs, spec.band, spec.period / c.time_steps, sol.substeps, spec.grid};
    const auto ref = timer.time("reference", [&] { return oracle::classical_snell(payoff, level, c.time_steps); });
    const double r = ref.front()[spec.grid.center()];
    a.report["reference"]["classical_snell"] = {{"value", r}, {"relative_error", rel_err(sol.root(), r)}};
    checks["classical_reduction"] = check_below(rel_err(sol.root(), r), 5e-3);
    double sigma = 0, rate = 0;
    if (geometric_put_reference(c, sigma, rate)) {
      const auto fd = timer.time("reference", [&] {
        return oracle::fd_american_put(spec.grid, c.payoff.strike, sigma, rate, spec.period, c.time_steps);
      });
      const double v = fd[spec.grid.center()];
      a.report["reference"]["finite_difference"] = {{"value", v}, {"relative_error", rel_err(sol.root(), v)}};
      checks["finite_difference"] = check_below(rel_err(sol.root(), v), 5e-3);
    }
  }
  a.report["checks"] = checks;
  a.value = value_csv(sol.surface);
  a.region = region_csv(sol.region, spec.grid, sol.surface.step_time);
  return a;
}

Artifacts run_oracle(const ProblemConfig& c, Timer& timer) {
  const auto model = std::get<LatticeModel>(build_kernel(c));
  const PayoffSpec payoff = build_payoff(c);
  const auto sup = timer.time("enumerate", [&] { return oracle::enumerate_sup(payoff, model, c.steps); });
  const auto infsup = timer.time("enumerate", [&] { return oracle::enumerate_infsup(payoff, model, c.steps); });
  const auto vs = timer.time("solve", [&] { return snell_sup(payoff, model, c.steps); });
  const auto vi = timer.time("solve", [&] { return snell_inf(payoff, model, c.steps); });
  Artifacts a;
  const auto& main = c.sense == "sup" ? vs : vi;
  a.report["root_value"] = main.surface.root();
  a.report["details"] = {{"enumerate_sup", oracle::to_json(sup)},
                         {"enumerate_infsup", oracle::to_json(infsup)},
                         {"snell_sup", vs.surface.root()},
                         {"snell_inf", vi.surface.root()}};
  a.report["checks"]["sup_equivalence"] = check_below(std::abs(vs.surface.root() - sup.value), 1e-12);
  a.report["checks"]["infsup_equivalence"] = check_below(std::abs(vi.surface.root() - infsup.value), 1e-12);
  a.value = value_csv(main.surface);
  a.region = region_csv(main.region, model.grid, model.dt);
  return a;
}

Artifacts run_regression(Timer& timer) {
  const auto cases = timer.time("regression", [] { return regression_suite(); });
  Artifacts a;
  json list = json::array();
  std::ostringstream csv;
  csv << "name,passed,observed,expected\n";
  bool all = true;
  for (const auto& rc : cases) {
    list.push_back({{"name", rc.name}, {"passed", rc.passed}, {"observed", rc.observed}, {"expected", rc.expected}});
    csv << rc.name << ',' << (rc.passed ? 1 : 0) << ',' << format_double(rc.observed) << ','
        << format_double(rc.expected) << '\n';
    all = all && rc.passed;
  }
  a.report["details"]["cases"] = list;
  a.report["checks"]["regression_suite"] = {{"passed", all}};
  a.extra_name = "regression.csv";
  a.extra = csv.str();
  if (!all) {
    a.exit_code = kFailure;
    a.message = "regression suite has failures";
  }
  return a;
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

std::vector<RegressionCase> regression_suite() {
  std::vector<RegressionCase> out;
  auto add = [&](std::string name, double observed, double expected) {
    out.push_back({std::move(name), observed == expected, observed, expected});
  };
  const auto band12 = VolatilityBand::make(1.0, 2.0);
  for (double alpha : {1.0, 1.5, 2.0}) {
    const ScalarFunction f{[alpha](double x) { return std::pow(x - 1.0, alpha) + 1.0; }, {}};
    add("maximal_expectation_alpha_" + format_double(alpha), maximal_expectation(f, band12, 1.0), 2.0);
  }
  const auto band = VolatilityBand::make(0.5, 1.0);
  for (long n : {1L, 10L, 1000L, 100000L, 10000000L}) {
    const double lo = 1.0 - 1.0 / static_cast<double>(n);
    const ScalarFunction ind{[lo](double x) { return (x > lo && x < 1.0) ? 1.0 : 0.0; }, {0.5 * (lo + 1.0)}};
    add("fatou_indicator_n_" + std::to_string(n), maximal_expectation(ind, band, 1.0), 1.0);
  }
  // Pointwise limit of the indicators is identically zero.
  add("fatou_limit", maximal_expectation({[](double) { return 0.0; }, {}}, band, 1.0), 0.0);

  Grid g;
  g.x0 = 0.0;
  g.dx = 0.25;
  g.half_width = 8;
  const auto spec = TransitionSpec::with_stable_substeps(GsdeCoefficients::affine(0, 0, 0, 0, 1, 0), band, 1.0, g);
  IterationConfig cfg;
  const double c = 0.75;
  const auto cst = [c](double) { return c; };
  const auto vi = value_iterate(cst, spec, cfg);
  add("constant_fixed_point_min", sup_distance(vi.F, LatticeFunction(g.size(), c)), 0.0);
  add("constant_fixed_point_iterations", vi.iterations, 1.0);
  const auto mult = fixed_point_multiplicity(cst, spec, cfg);
  add("constant_fixed_point_upper_is_fixed", mult.multiple ? 1.0 : 0.0, 1.0);

  LatticeModel m;
  m.band = band12;
  m.dt = 1.0;
  m.grid.dx = std::sqrt(2.0);
  m.grid.half_width = 3;
  const auto seq = PayoffSpec::sequence({1.0, 3.0, 2.0});
  add("deterministic_sequence_sup", snell_sup(seq, m, 2).surface.root(), 3.0);
  add("deterministic_sequence_inf", snell_inf(seq, m, 2).surface.root(), 1.0);
  return out;
}

RunOutcome run(const ProblemConfig& c, const std::string& config_text) {
  Timer timer;
  const auto t0 = Clock::now();
  Artifacts a;
  switch (c.kind) {
    case Kind::snell_finite: a = run_snell_finite(c, timer); break;
    case Kind::snell_infinite: a = run_snell_infinite(c, timer); break;
    case Kind::dyadic: a = run_dyadic(c, timer); break;
    case Kind::obstacle: a = run_obstacle(c, timer); break;
    case Kind::oracle: a = run_oracle(c, timer); break;
    case Kind::regression: a = run_regression(timer); break;
  }

  RunOutcome out;
  out.dir = resolve_output_dir(c);
  out.exit_code = a.exit_code;
  out.message = a.message;
  json report = a.report;
  report["schema"] = "gstop.report/1";
  report["kind"] = to_string(c.kind);
  report["status"] = a.exit_code == kOk ? "ok" : a.exit_code == kNotConverged ? "not_converged" : "failed";
  report["tie_tolerance"] = kTieTolerance;
  if (c.kind != Kind::regression) report["state"] = c.grid.x0;
  if (!a.message.empty()) report["message"] = a.message;
  bool all = true;
  const json checks = report.value("checks", json::object());
  for (const auto& chk : checks) all = all && chk.value("passed", false);
  report["all_checks_passed"] = all;
  out.report = report;

  const json canonical = to_json(c);
  const std::string canon_text = canonical.dump(2) + "\n";
  write_atomic(out.dir / "config.json", canon_text);
  if (!a.value.empty()) write_atomic(out.dir / "value.csv", a.value);
  if (!a.region.empty()) write_atomic(out.dir / "region.csv", a.region);
  if (!a.extra_name.empty()) write_atomic(out.dir / a.extra_name, a.extra);
  write_atomic(out.dir / "report.json", report.dump(2) + "\n");

  timer.seconds["total"] = std::chrono::duration<double>(Clock::now() - t0).count();
  json manifest{{"schema", "gstop.manifest/1"},
                {"engine_version", engine_version()},
                {"config_sha256", sha256_hex(canon_text)},
                {"timings_seconds", timer.seconds},
                {"created_utc", utc_now()}};
  if (!config_text.empty()) manifest["source_sha256"] = sha256_hex(config_text);
  write_atomic(out.dir / "manifest.json", manifest.dump(2) + "\n");
  return out;
}

RunOutcome run_file(const fs::path& path) {
  RunOutcome out;
  std::string text;
  try {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("(file)", "cannot read " + path.string());
    text.assign(std::istreambuf_iterator<char>(in), {});
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ConfigError("(file)", std::string("malformed JSON: ") + e.what());
    }
    const ProblemConfig c = config_from_json(j);
    return run(c, text);
  } catch (const ConfigError& e) {
    out.exit_code = kInvalidConfig;
    out.message = std::string("invalid config: ") + e.what();
  } catch (const std::exception& e) {
    out.exit_code = kFailure;
    out.message = std::string("run failed: ") + e.what();
  }
  return out;
}

fs::path emit_boundary(const fs::path& run_dir) {
  const fs::path region_path = run_dir / "region.csv";
  if (!fs::exists(region_path)) throw std::runtime_error("no stopping region in " + run_dir.string());
  std::ifstream cin_(run_dir / "config.json");
  if (!cin_) throw std::runtime_error("no config.json in " + run_dir.string());
  const ProblemConfig c = config_from_json(json::parse(cin_));
  const Grid grid = build_grid(c.grid);

  std::ifstream in(region_path);
  std::string line;
  std::getline(in, line);
  if (line != "step,time,node,state,stop") throw std::runtime_error("unexpected region.csv header");
  StoppingRegion region;
  std::vector<double> times;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string f[5];
    for (auto& s : f)
      if (!std::getline(row, s, ',')) throw std::runtime_error("malformed region.csv row: " + line);
    const auto n = static_cast<std::size_t>(std::stoul(f[0]));
    const auto j = static_cast<std::size_t>(std::stoul(f[2]));
    if (j >= grid.size()) throw std::runtime_error("region.csv node outside the grid");
    while (region.stop.size() <= n) {
      region.stop.emplace_back(grid.size(), false);
      times.push_back(0.0);
    }
    times[n] = std::stod(f[1]);
    region.stop[n][j] = f[4] == "1";
  }
  if (region.stop.empty()) throw std::runtime_error("region.csv has no rows");

  std::ostringstream os;
  os << "time,state\n";
  for (const auto& p : exercise_boundary(region, grid, 1.0)) {
    const auto n = static_cast<std::size_t>(std::lround(p.time));
    os << format_double(times[n]) << ',' << format_double(p.state) << '\n';
  }
  const fs::path out = run_dir / "boundary.csv";
  write_atomic(out, os.str());
  return out;
}

}  // namespace gstop::cli
