#include <doctest.h>

#include <cmath>
#include <random>

#include "gstop/oracle.hpp"
#include "gstop/snell.hpp"
#include "support.hpp"

using namespace gstop;

namespace {

LatticeModel trinomial(int hw = 3, double x0 = 1.0) {
  LatticeModel m;
  m.band = VolatilityBand::make(1.0, 2.0);
  m.dt = 1.0;
  m.grid.dx = std::sqrt(2.0);
  m.grid.x0 = x0;
  m.grid.half_width = hw;
  m.n_steps = 3;
  return m;
}

PayoffSpec put(double k) {
  return PayoffSpec::markov_payoff([k](double x) { return std::max(k - x, 0.0); });
}

oracle::StoppingRule first_hit_rule(const StoppingRegion& region, const oracle::ReachableSet& rs) {
  oracle::StoppingRule rule;
  for (const auto& s : rs.sites) rule.stop.push_back(region.at(s.step)[s.node]);
  return rule;
}

}  // namespace

TEST_CASE("deterministic sequence 1, 3, 2") {
  const auto payoff = PayoffSpec::sequence({1.0, 3.0, 2.0});
  const LatticeModel m = trinomial();
  const auto sup = snell_sup(payoff, m, 2);
  const std::size_t c = m.grid.center();
  CHECK(sup.surface.root() == 3.0);
  CHECK_FALSE(sup.region.at(0)[c]);
  CHECK(sup.region.at(1)[c]);
  CHECK(sup.region.first_hit(0, {c, c, c}) == 1);
  for (int n = 0; n <= 1; ++n) CHECK(sup.surface.values[n][c] == 3.0);

  const auto inf = snell_inf(payoff, m, 2);
  CHECK(inf.surface.root() == 1.0);
  CHECK(inf.region.at(0)[c]);
  CHECK(inf.region.first_hit(0, {c}) == 0);

  CHECK(martingale_to_hit_check(sup).passed);
}

TEST_CASE("constant payoff") {
  const LatticeModel m = trinomial();
  const auto payoff = PayoffSpec::markov_payoff([](double) { return 0.7; });
  for (const auto& r : {snell_sup(payoff, m, 3), snell_inf(payoff, m, 3)}) {
    for (const auto& v : r.surface.values)
      for (double x : v) CHECK(x == 0.7);
    for (const auto& mask : r.region.stop)
      for (bool b : mask) CHECK(b);
    CHECK(r.region.first_hit(0, {m.grid.center()}) == 0);
  }
  CHECK(snell_sup(payoff, m, 0).surface.root() == 0.7);
  CHECK_THROWS_AS(snell_sup(payoff, m, -1), ModelError);
}

TEST_CASE("3-step put matches the enumeration oracle") {
  const LatticeModel m = trinomial();
  const auto payoff = put(1.0);
  const auto sup = snell_sup(payoff, m, 3);
  const auto inf = snell_inf(payoff, m, 3);
  CHECK(std::abs(sup.surface.root() - oracle::enumerate_sup(payoff, m, 3).value) < 1e-12);
  CHECK(std::abs(inf.surface.root() - oracle::enumerate_infsup(payoff, m, 3).value) < 1e-12);
  CHECK(inf.surface.root() <= sup.surface.root());
}

TEST_CASE("surface invariants and the stopped martingale replay") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto in = testing::random_instance(1000 + seed, 4, 4);
    in.horizon = 4;
    const auto r = snell_sup(in.payoff, in.model, 4);
    const auto& s = r.surface;
    for (int n = 0; n <= 4; ++n)
      for (std::size_t j = 0; j < s.grid.size(); ++j) {
        CHECK(s.values[n][j] >= s.payoff[n][j]);
        if (n == 4) CHECK(s.values[n][j] == s.payoff[n][j]);
      }
    CHECK(supermartingale_violation(r) <= 1e-12);
    const auto rep = martingale_to_hit_check(r);
    CHECK(rep.passed);
    CHECK(rep.worst < 1e-12);
    for (bool b : r.region.stop.back()) CHECK(b);
  }
}

TEST_CASE("dominance over every rule with equality at the first-hitting rule") {
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    const auto in = testing::random_instance(50 + seed, 3, 2);
    const auto r = snell_sup(in.payoff, in.model, in.horizon);
    const auto rs = oracle::reachable_sites(in.model, in.horizon);
    const std::size_t n = rs.sites.size();
    REQUIRE(n <= 16);
    const double v0 = r.surface.root();
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
      oracle::StoppingRule rule;
      for (std::size_t q = 0; q < n; ++q) rule.stop.push_back((mask >> q) & 1U);
      CHECK(oracle::evaluate_rule(in.payoff, in.model, in.horizon, rs, rule) <= v0 + 1e-12);
    }
    const auto hit = first_hit_rule(r.region, rs);
    CHECK(std::abs(oracle::evaluate_rule(in.payoff, in.model, in.horizon, rs, hit) - v0) < 1e-12);
  }
}

TEST_CASE("minimality against random dominating supermartingales") {
  const auto in = testing::random_instance(77, 4, 4);
  const auto r = snell_sup(in.payoff, in.model, in.horizon);
  const auto exact = oracle::random_dominator(in.payoff, in.model, in.horizon, 1, 0.0);
  for (std::size_t n = 0; n < exact.size(); ++n)
    CHECK(sup_distance(exact[n], r.surface.values[n]) == 0.0);
  const std::size_t c = in.model.grid.center();
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto u = oracle::random_dominator(in.payoff, in.model, in.horizon, seed);
    CHECK(u.front()[c] >= r.surface.root());
    for (std::size_t n = 0; n < u.size(); ++n)
      for (std::size_t j = 0; j < u[n].size(); ++j) CHECK(u[n][j] >= r.surface.values[n][j]);
  }
  const LatticeModel m = trinomial();
  const auto cst = PayoffSpec::markov_payoff([](double) { return 2.0; });
  CHECK(oracle::random_dominator(cst, m, 3, 5).front()[m.grid.center()] > 2.0);
}

TEST_CASE("horizon monotonicity and scale equivariance") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    const LatticeModel m = testing::random_model(rng, 6);
    const auto payoff = testing::random_lipschitz_payoff(rng, 0);  // time-homogeneous extension
    double prev = -INFINITY;
    for (int n = 0; n <= 5; ++n) {
      const double v = snell_sup(payoff, m, n).surface.root();
      CHECK(v >= prev - 1e-12);
      prev = v;
    }
    const double lambda = 0.1 + 3.0 * std::uniform_real_distribution<double>(0, 1)(rng);
    PayoffSpec scaled = payoff;
    scaled.reward = [payoff, lambda](int n, double t, double x) { return lambda * payoff(n, t, x); };
    const auto a = snell_sup(payoff, m, 4).surface;
    const auto b = snell_sup(scaled, m, 4).surface;
    for (int n = 0; n <= 4; ++n)
      for (std::size_t j = 0; j < m.grid.size(); ++j)
        CHECK(std::abs(b.values[n][j] - lambda * a.values[n][j]) <= 1e-12 * (1 + std::abs(b.values[n][j])));
  }
}

TEST_CASE("degenerate band matches the classical backward induction") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 40; ++trial) {
    LatticeModel m = testing::random_model(rng);
    m.band = VolatilityBand::make(m.band.sigma2_max, m.band.sigma2_max);
    const auto payoff = testing::random_lipschitz_payoff(rng, 4);
    const auto ref = oracle::classical_snell(payoff, m, 4);
    const auto sup = snell_sup(payoff, m, 4).surface;
    for (int n = 0; n <= 4; ++n)
      for (std::size_t j = 0; j < m.grid.size(); ++j)
        CHECK(std::abs(sup.values[n][j] - ref[n][j]) <= 1e-12);
  }
  LatticeModel amb = trinomial();
  CHECK_THROWS_AS(oracle::classical_snell(put(1.0), amb, 2), ModelError);
}

TEST_CASE("Wald-Bellman recursion and the Markov factorization") {
  Grid g;
  g.x0 = 1.0;
  g.dx = 0.1;
  g.half_width = 30;
  const auto spec = TransitionSpec::with_stable_substeps(GsdeCoefficients::geometric(0.0, 0.3),
                                                         VolatilityBand::make(0.5, 1.0), 0.25, g);
  const auto f = [](double x) { return std::max(1.0 - x, 0.0); };

  const auto cst = wald_bellman_finite([](double) { return -1.5; }, spec, 4);
  for (const auto& F : cst)
    for (double v : F) CHECK(v == -1.5);

  const auto F1 = wald_bellman_finite(f, spec, 1);
  const auto fl = LatticeFunction::sample(g, f);
  const auto direct = pointwise_max(fl, transition_T(fl, spec));
  CHECK(sup_distance(F1[1], direct) == 0.0);

  const auto F3 = wald_bellman_finite(f, spec, 3);
  const auto sup = snell_sup(PayoffSpec::markov_payoff(f), spec, 3);
  CHECK(std::abs(F3[3][g.center()] - sup.surface.root()) < 1e-12);
  CHECK(factorization_gap(sup.surface, F3) < 1e-12);
}

TEST_CASE("exercise boundary rows") {
  const LatticeModel m = trinomial(6, 0.0);
  const auto cst = snell_sup(PayoffSpec::markov_payoff([](double) { return 1.0; }), m, 3);
  const auto rows = exercise_boundary(cst.region, m.grid, m.dt);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].time == 0.0);
  CHECK(rows[0].state == m.grid.x0);

  // Strictly convex increasing reward with no early exercise.
  const auto call = snell_sup(PayoffSpec::markov_payoff([](double x) { return x * x; }), m, 3);
  const auto only = exercise_boundary(call.region, m.grid, m.dt);
  REQUIRE(only.size() >= 1);
  CHECK(only.back().time == doctest::Approx(3.0));
}
