#include <doctest.h>

#include <cmath>
#include <random>

#include "gstop/gkernel.hpp"
#include "gstop/oracle.hpp"
#include "support.hpp"

using namespace gstop;

namespace {

LatticeModel unit_model(double lo = 1.0, double hi = 2.0, int hw = 3) {
  LatticeModel m;
  m.band = VolatilityBand::make(lo, hi);
  m.dt = 1.0;
  m.grid.dx = std::sqrt(2.0);
  m.grid.x0 = 0.0;
  m.grid.half_width = hw;
  m.n_steps = 1;
  return m;
}

// Plain weighted sum with a fixed rate, the textbook trinomial expectation.
LatticeFunction linear_step(const LatticeFunction& f, const LatticeModel& m, double v) {
  const double p = v * m.dt / (2.0 * m.grid.dx * m.grid.dx);
  LatticeFunction out(f.size(), 0.0);
  for (std::size_t j = 0; j < f.size(); ++j) {
    const double dn = j == 0 ? f[1] : f[j - 1];
    const double up = j + 1 == f.size() ? f[f.size() - 2] : f[j + 1];
    out[j] = p * up + (1.0 - 2.0 * p) * f[j] + p * dn;
  }
  return out;
}

}  // namespace

TEST_CASE("g_function examples") {
  const auto band = VolatilityBand::make(1.0, 2.0);
  CHECK(g_function(2.0, band) == 2.0);
  CHECK(g_function(-2.0, band) == -1.0);
  CHECK(g_function(0.0, band) == 0.0);
  CHECK(g_function(0.0, VolatilityBand::make(0.3, 0.7)) == 0.0);
  // Positive homogeneity and monotonicity.
  CHECK(g_function(6.0, band) == doctest::Approx(3.0 * g_function(2.0, band)));
  CHECK(g_function(-1.0, band) < g_function(1.0, band));
}

TEST_CASE("band validation") {
  CHECK_THROWS_AS(VolatilityBand::make(0.0, 1.0), ModelError);
  CHECK_THROWS_AS(VolatilityBand::make(2.0, 1.0), ModelError);
  CHECK(VolatilityBand::make(1.0, 1.0).degenerate());
  CHECK_FALSE(VolatilityBand::make(1.0, 2.0).degenerate());
}

TEST_CASE("invalid lattice rejected") {
  LatticeModel m = unit_model();
  m.grid.dx = 1.0;  // dx^2 = 1 < sigma2_max * dt = 2
  CHECK_THROWS_AS(step_sup(LatticeFunction(m.grid.size(), 0.0), m), ModelError);
  m = unit_model();
  m.dt = -1.0;
  CHECK_THROWS_AS(m.validate(), ModelError);
  m = unit_model();
  CHECK_THROWS_AS(step_sup(LatticeFunction(3, 0.0), m), ModelError);
}

TEST_CASE("step_sup and step_inf examples") {
  const LatticeModel m = unit_model();
  const std::size_t c = m.grid.center();
  const auto id = LatticeFunction::sample(m.grid, [](double x) { return x; });
  const auto sq = LatticeFunction::sample(m.grid, [](double x) { return x * x; });

  auto s = step_sup(id, m);
  CHECK(std::abs(s.value[c]) < 1e-15);
  s = step_sup(sq, m);
  CHECK(s.value[c] == doctest::Approx(2.0));
  CHECK(s.choice.rate[c] == 2.0);
  s = step_sup(-sq, m);
  CHECK(s.value[c] == doctest::Approx(-1.0));
  CHECK(s.choice.rate[c] == 1.0);

  auto i = step_inf(sq, m);
  CHECK(i.value[c] == doctest::Approx(1.0));
  CHECK(i.choice.rate[c] == 1.0);
  i = step_inf(LatticeFunction(m.grid.size(), 3.25), m);
  for (double v : i.value) CHECK(v == 3.25);
  i = step_inf(id, m);
  CHECK(std::abs(i.value[c]) < 1e-15);
}

TEST_CASE("step choice weights are a probability with the chosen variance") {
  const LatticeModel m = unit_model(0.5, 1.5);
  std::mt19937_64 rng(3);
  const auto f = testing::random_function(rng, m.grid.size());
  const auto s = step_sup(f, m);
  for (std::size_t j = 0; j < m.grid.size(); ++j) {
    const auto& ch = s.choice;
    CHECK(ch.p_up[j] >= 0.0);
    CHECK(ch.p_mid[j] >= 0.0);
    CHECK(ch.p_up[j] + ch.p_mid[j] + ch.p_down[j] == doctest::Approx(1.0));
    CHECK(ch.p_up[j] == ch.p_down[j]);
    const double second = (ch.p_up[j] + ch.p_down[j]) * m.grid.dx * m.grid.dx;
    CHECK(second == doctest::Approx(ch.rate[j] * m.dt));
  }
}

TEST_CASE("ties resolve to the upper rate for sup and lower for inf") {
  const LatticeModel m = unit_model();
  const auto lin = LatticeFunction::sample(m.grid, [](double x) { return 3.0 * x + 1.0; });
  const auto s = step_sup(lin, m);
  const auto i = step_inf(lin, m);
  const std::size_t c = m.grid.center();
  CHECK(s.choice.rate[c] == 2.0);
  CHECK(i.choice.rate[c] == 1.0);
}

TEST_CASE("absorbing boundary freezes the edge nodes") {
  LatticeModel m = unit_model();
  m.grid.boundary = Boundary::absorbing;
  const auto sq = LatticeFunction::sample(m.grid, [](double x) { return x * x; });
  const auto s = step_sup(sq, m);
  CHECK(s.value[0] == sq[0]);
  CHECK(s.value[m.grid.size() - 1] == sq[m.grid.size() - 1]);
  CHECK(s.value[m.grid.center()] == doctest::Approx(2.0));
}

TEST_CASE("kernel properties on random lattice functions") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const LatticeModel m = testing::random_model(rng);
    const std::size_t n = m.grid.size();
    const auto f = testing::random_function(rng, n);
    const auto g = testing::random_function(rng, n);
    const double c = 4.0 * u(rng) - 2.0;

    const auto sc = step_sup(LatticeFunction(n, c), m).value;
    for (double v : sc) CHECK(v == c);

    auto bumped = f;
    for (std::size_t j = 0; j < n; ++j) bumped[j] += u(rng);
    const auto sf = step_sup(f, m).value;
    const auto sb = step_sup(bumped, m).value;
    const auto sg = step_sup(g, m).value;
    const auto sfg = step_sup(f + g, m).value;
    const double lambda = 3.0 * u(rng);
    const auto sl = step_sup(lambda * f, m).value;
    const auto dual = step_inf(f, m).value;
    const auto neg = step_sup(-f, m).value;
    for (std::size_t j = 0; j < n; ++j) {
      CHECK(sf[j] <= sb[j] + 1e-12);
      CHECK(sfg[j] <= sf[j] + sg[j] + 1e-12);
      CHECK(std::abs(sl[j] - lambda * sf[j]) <= 1e-12);
      CHECK(std::abs(dual[j] + neg[j]) <= 1e-14);
    }

    LatticeModel wide = m;
    wide.band = VolatilityBand::make(m.band.sigma2_min * 0.5, m.band.sigma2_max);
    const auto sw = step_sup(f, wide).value;
    for (std::size_t j = 0; j < n; ++j) CHECK(sw[j] >= sf[j] - 1e-12);
  }
}

TEST_CASE("degenerate band reduces to the classical kernel") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    LatticeModel m = testing::random_model(rng);
    m.band = VolatilityBand::make(m.band.sigma2_max, m.band.sigma2_max);
    const auto f = testing::random_function(rng, m.grid.size());
    const auto s = step_sup(f, m).value;
    const auto i = step_inf(f, m).value;
    const auto lin = linear_step(f, m, m.band.sigma2_max);
    for (std::size_t j = 0; j < f.size(); ++j) {
      CHECK(s[j] == i[j]);
      CHECK(std::abs(s[j] - lin[j]) <= 1e-14 * (1.0 + std::abs(lin[j])));
    }
  }
}

TEST_CASE("composed sweeps equal the max over all scenario policies") {
  // Oracle: every endpoint policy on the reachable sites, linear k-step
  // expectation with no early stopping.
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 12; ++trial) {
    LatticeModel m = testing::random_model(rng);
    const int k = 1 + trial % 4;
    const auto terminal = testing::random_function(rng, m.grid.size());
    const PayoffSpec payoff = PayoffSpec::adapted([&, k](int n, double, double x) {
      if (n < k) return 0.0;
      const auto j = static_cast<std::size_t>(std::lround((x - m.grid.x0) / m.grid.dx) + m.grid.half_width);
      return terminal[j];
    });
    LatticeFunction u = terminal;
    for (int s = 0; s < k; ++s) u = step_sup(u, m).value;

    const auto sites = oracle::reachable_sites(m, k);
    const oracle::StoppingRule never{std::vector<bool>(sites.sites.size(), false)};
    const std::size_t r = sites.sites.size();
    double best = -INFINITY;
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << r); ++mask) {
      oracle::ScenarioPolicy pol;
      for (std::size_t q = 0; q < r; ++q)
        pol.rate.push_back((mask >> q) & 1U ? m.band.sigma2_max : m.band.sigma2_min);
      best = std::max(best, oracle::evaluate_linear(payoff, m, k, sites, never, pol));
    }
    CHECK(std::abs(u[m.grid.center()] - best) <= 1e-12);
  }
}

TEST_CASE("boundary insensitivity when the stencil cannot reach the edge") {
  LatticeModel m = unit_model(1.0, 2.0, 4);
  const auto put = [](double x) { return std::max(1.0 - x, 0.0); };
  LatticeModel wide = m;
  wide.grid.half_width = 8;
  LatticeFunction a = LatticeFunction::sample(m.grid, put);
  LatticeFunction b = LatticeFunction::sample(wide.grid, put);
  for (int s = 0; s < 4; ++s) {
    a = step_sup(a, m).value;
    b = step_sup(b, wide).value;
  }
  CHECK(std::abs(a[m.grid.center()] - b[wide.grid.center()]) < 1e-10);
}

TEST_CASE("maximal_expectation examples") {
  const auto band = VolatilityBand::make(1.0, 2.0);
  for (double alpha : {1.0, 1.5, 2.0}) {
    const ScalarFunction f{[alpha](double x) { return std::pow(x - 1.0, alpha) + 1.0; }, {}};
    CHECK(maximal_expectation(f, band, 1.0) == 2.0);
  }
  const auto low = VolatilityBand::make(0.5, 1.0);
  for (int n : {1, 2, 10, 1000, 100000, 10000000}) {
    const double a = 1.0 - 1.0 / n;
    const ScalarFunction ind{[a](double x) { return (x > a && x < 1.0) ? 1.0 : 0.0; },
                             {0.5 * (a + 1.0)}};
    CHECK(maximal_expectation(ind, low, 1.0) == 1.0);
  }
  CHECK(maximal_expectation({[](double) { return -0.75; }, {}}, band, 3.0) == -0.75);
  CHECK_THROWS_AS(maximal_expectation({[](double) { return 0.0; }, {}}, band, -1.0), ModelError);
  // t = 0 collapses the interval to {0}.
  CHECK(maximal_expectation({[](double x) { return x + 5.0; }, {}}, band, 0.0) == 5.0);
}
