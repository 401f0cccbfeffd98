#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "gstop/gkernel.hpp"
#include "gstop/snell.hpp"

namespace gstop::testing {

struct RandomInstance {
  LatticeModel model;
  PayoffSpec payoff;
  int horizon = 0;
};

inline LatticeModel random_model(std::mt19937_64& rng, int max_half_width = 4) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> hw(1, max_half_width);
  LatticeModel m;
  const double lo = 0.2 + u(rng);
  const double hi = lo * (1.0 + 2.0 * u(rng));
  m.band = VolatilityBand::make(lo, hi);
  m.dt = 0.25 + u(rng);
  m.grid.dx = std::sqrt(hi * m.dt * (1.0 + 0.5 * u(rng)));
  m.grid.x0 = 2.0 * u(rng) - 1.0;
  m.grid.half_width = hw(rng);
  m.n_steps = 4;
  return m;
}

/// X_n(x) = c_n + sum_k w_{n,k} |x - a_{n,k}| + s_n x: Lipschitz, time-dependent.
inline PayoffSpec random_lipschitz_payoff(std::mt19937_64& rng, int horizon) {
  std::normal_distribution<double> g(0.0, 1.0);
  struct Term {
    double w, a;
  };
  std::vector<double> c, s;
  std::vector<std::vector<Term>> terms;
  for (int n = 0; n <= horizon; ++n) {
    c.push_back(0.5 * g(rng));
    s.push_back(0.5 * g(rng));
    std::vector<Term> t;
    for (int k = 0; k < 3; ++k) t.push_back({0.7 * g(rng), 1.5 * g(rng)});
    terms.push_back(t);
  }
  return PayoffSpec::adapted([=](int n, double, double x) {
    const auto i = static_cast<std::size_t>(std::min(n, horizon));
    double v = c[i] + s[i] * x;
    for (const auto& t : terms[i]) v += t.w * std::abs(x - t.a);
    return v;
  });
}

inline RandomInstance random_instance(std::uint64_t seed, int max_horizon = 4,
                                      int max_half_width = 4) {
  std::mt19937_64 rng(seed);
  RandomInstance in;
  in.model = random_model(rng, max_half_width);
  std::uniform_int_distribution<int> nh(1, max_horizon);
  in.horizon = nh(rng);
  in.model.n_steps = in.horizon;
  in.payoff = random_lipschitz_payoff(rng, in.horizon);
  return in;
}

inline LatticeFunction random_function(std::mt19937_64& rng, std::size_t n, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  std::vector<double> v(n);
  for (auto& x : v) x = g(rng);
  return LatticeFunction(std::move(v));
}

}  // namespace gstop::testing
