// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <unistd.h>

#include "gstop/cli.hpp"
#include "gstop/horizon.hpp"
#include "gstop/oracle.hpp"
#include "gstop/refine.hpp"
#include "support.hpp"

using namespace gstop;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

constexpr int kInstances = 50;

testing::RandomInstance instance(int k) { return testing::random_instance(90000 + k, 4, 4); }

Outcome oracle_equivalence() {
  double worst_sup = 0, worst_inf = 0;
  for (int k = 0; k < kInstances; ++k) {
    const auto in = instance(k);
    const double vs = snell_sup(in.payoff, in.model, in.horizon).surface.root();
    const double vi = snell_inf(in.payoff, in.model, in.horizon).surface.root();
    worst_sup = std::max(worst_sup, std::abs(vs - oracle::enumerate_sup(in.payoff, in.model, in.horizon).value));
    worst_inf = std::max(worst_inf, std::abs(vi - oracle::enumerate_infsup(in.payoff, in.model, in.horizon).value));
  }
  return {worst_sup <= 1e-12 && worst_inf <= 1e-12,
          "50 instances, max |sup gap| " + fmt("%.2e", worst_sup) + ", max |inf gap| " + fmt("%.2e", worst_inf)};
}

Outcome classical_reduction() {
  Grid g;
  g.x0 = 1.0;
  g.dx = 0.005;
  g.half_width = 200;
  const auto band = VolatilityBand::make(0.04, 0.04);
  const auto coeffs = GsdeCoefficients::geometric(0.0, 1.0);
  const auto put = PayoffSpec::markov_payoff([](double x) { return std::max(1.0 - x, 0.0); });

  const auto dates = TransitionSpec::with_stable_substeps(coeffs, band, 1.0 / 64.0, g);
  const double v = snell_sup(put, dates, 64).surface.root();
  const double ref = oracle::classical_snell(put, dates, 64).front()[g.center()];
  const double crr = oracle::crr_american_put(1.0, 1.0, 0.2, 0.0, 1.0, 64);
  const double e1 = std::abs(v - ref) / ref;

  ObstacleGrid og;
  og.time_steps = 256;
  const auto sol = solve_obstacle(put, TransitionSpec{coeffs, band, 1.0, 1, g}, og);
  const double fd = oracle::fd_american_put(g, 1.0, 0.2, 0.0, 1.0, 256)[g.center()];
  const double e2 = std::abs(sol.root() - fd) / fd;
  return {e1 <= 5e-3 && e2 <= 5e-3,
          "snell_sup " + fmt("%.6f", v) + " vs classical " + fmt("%.6f", ref) + " (rel " + fmt("%.1e", e1) +
              ", CRR-64 " + fmt("%.6f", crr) + "); obstacle 256x401 " + fmt("%.6f", sol.root()) + " vs FD " +
              fmt("%.6f", fd) + " (rel " + fmt("%.1e", e2) + ")"};
}

Outcome worked_example_regressions() {
  int failed = 0, total = 0;
  std::string names;
  for (const auto& rc : cli::regression_suite()) {
    ++total;
    if (!rc.passed) {
      ++failed;
      names += " " + rc.name;
    }
  }
  // Minimal fixed point for a constant reward, checked directly as well.
  Grid g;
  g.dx = 0.2;
  g.half_width = 10;
  g.boundary = Boundary::absorbing;
  const auto spec = TransitionSpec::with_stable_substeps(GsdeCoefficients::affine(0, 0, 0, 0, 1, 0),
                                                         VolatilityBand::make(0.5, 1.0), 1.0, g);
  IterationConfig cfg;
  const auto m = fixed_point_multiplicity([](double) { return 1.25; }, spec, cfg);
  bool fixed = m.from_payoff.converged && m.multiple;
  for (double v : m.from_payoff.F) fixed = fixed && v == 1.25;
  ++total;
  if (!fixed) {
    ++failed;
    names += " minimal_fixed_point";
  }
  return {failed == 0, std::to_string(total - failed) + "/" + std::to_string(total) + " cases" +
                           (failed ? ", failed:" + names : "")};
}

Outcome kernel_properties() {
  std::mt19937_64 rng(424242);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  long violations = 0;
  double worst = 0;
  auto expect = [&](double excess) {
    worst = std::max(worst, excess);
    if (excess > 1e-12) ++violations;
  };
  for (int trial = 0; trial < 1000; ++trial) {
    const LatticeModel m = testing::random_model(rng, 6);
    const std::size_t n = m.grid.size();
    const auto f = testing::random_function(rng, n);
    const auto g = testing::random_function(rng, n);
    const double c = 4.0 * u(rng) - 2.0, lambda = 3.0 * u(rng);
    auto bumped = f;
    for (std::size_t j = 0; j < n; ++j) bumped[j] += u(rng);
    LatticeModel wide = m;
    wide.band = VolatilityBand::make(m.band.sigma2_min * (0.2 + 0.8 * u(rng)), m.band.sigma2_max);

    const auto sc = step_sup(LatticeFunction(n, c), m).value;
    const auto sf = step_sup(f, m).value;
    const auto sb = step_sup(bumped, m).value;
    const auto sg = step_sup(g, m).value;
    const auto sfg = step_sup(f + g, m).value;
    const auto sl = step_sup(lambda * f, m).value;
    const auto inf = step_inf(f, m).value;
    const auto neg = step_sup(-f, m).value;
    const auto sw = step_sup(f, wide).value;
    for (std::size_t j = 0; j < n; ++j) {
      expect(std::abs(sc[j] - c));
      expect(sf[j] - sb[j]);
      expect(sfg[j] - sf[j] - sg[j]);
      expect(std::abs(sl[j] - lambda * sf[j]));
      expect(std::abs(inf[j] + neg[j]));
      expect(sf[j] - sw[j]);
    }
  }
  return {violations == 0,
          "1000 trials, " + std::to_string(violations) + " violations, worst excess " + fmt("%.2e", worst)};
}

Outcome supermartingale_minimality() {
  double worst_dom = 0, worst_super = 0, worst_hit = 0, worst_min = 0;
  for (int k = 0; k < kInstances; ++k) {
    const auto in = instance(k);
    const auto r = snell_sup(in.payoff, in.model, in.horizon);
    const auto& s = r.surface;
    for (int n = 0; n <= in.horizon; ++n) {
      for (std::size_t j = 0; j < s.grid.size(); ++j) worst_dom = std::max(worst_dom, s.payoff[n][j] - s.values[n][j]);
      if (n < in.horizon) {
        const auto cont = step_sup(s.values[n + 1], in.model).value;
        for (std::size_t j = 0; j < s.grid.size(); ++j) worst_super = std::max(worst_super, cont[j] - s.values[n][j]);
      }
    }
    worst_hit = std::max(worst_hit, martingale_to_hit_check(r).worst);
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      const auto u = oracle::random_dominator(in.payoff, in.model, in.horizon, 7000 + seed);
      worst_min = std::max(worst_min, s.root() - u.front()[s.grid.center()]);
    }
  }
  const bool ok = worst_dom <= 0.0 && worst_super <= 1e-12 && worst_hit < 1e-12 && worst_min <= 0.0;
  return {ok, "50 instances x 100 dominators; max X-V " + fmt("%.1e", worst_dom) + ", max step_sup(V')-V " +
                  fmt("%.1e", worst_super) + ", replay " + fmt("%.1e", worst_hit) + ", max V0-U0 " +
                  fmt("%.1e", worst_min)};
}

Outcome infinite_horizon() {
  // Put on a mean-reverting asset dX = (0.5 - X) dt + 0.02 dB on [0, 2].
  Grid g;
  g.x0 = 1.0;
  g.dx = 0.005;
  g.half_width = 200;
  auto spec = TransitionSpec::with_stable_substeps(GsdeCoefficients::affine(0.5, -1.0, 0, 0, 0.02, 0),
                                                   VolatilityBand::make(0.5, 1.0), 1.0, g);
  spec.substeps = std::max(spec.substeps, 16);
  const auto put = [](double x) { return std::max(1.0 - x, 0.0); };
  IterationConfig cfg;
  cfg.discount = 0.9;
  cfg.tol = 1e-12;
  cfg.max_iter = 300;
  const auto vi = value_iterate(put, spec, cfg);
  const auto sh = superharmonic_check(vi.F, spec, 0.9);
  const auto env = superharmonic_envelope(put, spec, 4, 0.9);
  IterationConfig fine = cfg;
  fine.discount = std::pow(0.9, 1.0 / 16.0);
  fine.max_iter = 100000;
  const auto matched = value_iterate(put, dyadic_substep_spec(spec, 4), fine);
  const double gap = sup_distance(env, matched.F);
  const bool ok = vi.residual < 1e-9 && vi.iterations <= 300 && vi.min_increment >= 0.0 && sh.gap < 1e-10 &&
                  matched.converged && gap < 1e-3;
  return {ok, "residual " + fmt("%.1e", vi.residual) + " in " + std::to_string(vi.iterations) +
                  " iterations, min increment " + fmt("%.1e", vi.min_increment) + ", superharmonic gap " +
                  fmt("%.1e", sh.gap) + ", envelope gap " + fmt("%.2e", gap)};
}

Outcome dyadic_refinement() {
  Grid g;
  g.x0 = 1.0;
  g.dx = 0.01;
  g.half_width = 100;
  const auto payoff = PayoffSpec::adapted(
      [](int, double t, double x) { return std::exp(-0.05 * t) * std::max(1.0 - x, 0.0); });
  const TransitionSpec spec{GsdeCoefficients::geometric(0.05, 1.0), VolatilityBand::make(0.04, 0.09), 1.0, 4096, g};
  const auto ladder = dyadic_ladder(payoff, spec, 1, 8);
  ObstacleGrid og;
  og.time_steps = 256;
  og.substeps = 16;
  const double u = solve_obstacle(payoff, spec, og).root();
  const double v4 = ladder.levels[3].root_value, v8 = ladder.levels[7].root_value;
  const bool ok = ladder.monotone && ladder.max_violation <= 1e-12 && std::abs(v8 - u) < std::abs(v4 - u);
  return {ok, "max violation " + fmt("%.1e", ladder.max_violation) + ", |V8-u| " + fmt("%.2e", std::abs(v8 - u)) +
                  " < |V4-u| " + fmt("%.2e", std::abs(v4 - u)) + ", u " + fmt("%.6f", u)};
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file() || e.path().filename() == "manifest.json") continue;
    std::ifstream in(e.path(), std::ios::binary);
    out[fs::relative(e.path(), dir).string()] = {std::istreambuf_iterator<char>(in), {}};
  }
  return out;
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / ("gstop_acceptance_" + std::to_string(::getpid()));
  std::vector<fs::path> configs;
  for (const auto& e : fs::directory_iterator(GSTOP_CONFIG_DIR))
    if (e.path().extension() == ".json") configs.push_back(e.path());
  std::sort(configs.begin(), configs.end());
  int mismatched = 0, files = 0, failed_runs = 0;
  std::string bad;
  for (int pass = 0; pass < 2; ++pass) {
    const fs::path dir = root / std::to_string(pass);
    fs::remove_all(dir);
    ::setenv("GSTOP_OUTPUT_ROOT", dir.c_str(), 1);
    for (const auto& c : configs)
      if (cli::run_file(c).exit_code != cli::kOk) ++failed_runs;
    cli::ProblemConfig reg;
    reg.kind = cli::Kind::regression;
    reg.output_dir = "runs/regression";
    cli::run(reg, "");
  }
  ::unsetenv("GSTOP_OUTPUT_ROOT");
  const auto a = snapshot(root / "0"), b = snapshot(root / "1");
  for (const auto& [name, bytes] : a) {
    ++files;
    const auto it = b.find(name);
    if (it == b.end() || it->second != bytes) {
      ++mismatched;
      bad += " " + name;
    }
  }
  if (a.size() != b.size()) ++mismatched;

  // Library-level reruns are bit-identical too.
  for (int k = 0; k < 10; ++k) {
    const auto in = instance(k);
    if (snell_sup(in.payoff, in.model, in.horizon).surface.values !=
        snell_sup(in.payoff, in.model, in.horizon).surface.values)
      ++mismatched;
  }
  fs::remove_all(root);
  return {mismatched == 0 && failed_runs == 0 && files > 0,
          std::to_string(configs.size() + 1) + " CLI runs twice, " + std::to_string(files) + " files compared, " +
              std::to_string(mismatched) + " mismatches" + (bad.empty() ? "" : ":" + bad) +
              (failed_runs ? ", " + std::to_string(failed_runs) + " runs failed" : "")};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"oracle equivalence", oracle_equivalence},
      {"classical reduction", classical_reduction},
      {"worked-example regressions", worked_example_regressions},
      {"kernel property suite", kernel_properties},
      {"supermartingale and minimality", supermartingale_minimality},
      {"infinite-horizon convergence", infinite_horizon},
      {"dyadic refinement", dyadic_refinement},
      {"determinism", determinism},
  };
  const double limits[] = {60, 0, 0, 0, 0, 0, 300, 0};
  int failures = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (limits[k] > 0 && secs >= limits[k]) {
      o.passed = false;
      o.detail += ", over the " + fmt("%.0f", limits[k]) + " s limit";
    }
    if (!o.passed) ++failures;
    std::printf("%s %zu %s: %s [%.2f s]\n", o.passed ? "PASS" : "FAIL", k + 1, criteria[k].first, o.detail.c_str(),
                secs);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
