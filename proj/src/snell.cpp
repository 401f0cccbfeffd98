#include "gstop/snell.hpp"

#include <algorithm>
#include <cmath>

namespace gstop {

PayoffSpec PayoffSpec::markov_payoff(std::function<double(double)> f) {
  PayoffSpec p;
  p.reward = [f = std::move(f)](int, double, double x) { return f(x); };
  p.markov = true;
  return p;
}

PayoffSpec PayoffSpec::adapted(std::function<double(int, double, double)> g) {
  PayoffSpec p;
  p.reward = std::move(g);
  p.markov = false;
  return p;
}

PayoffSpec PayoffSpec::sequence(std::vector<double> values) {
  if (values.empty()) throw ModelError("payoff sequence must not be empty");
  PayoffSpec p;
  p.lower = *std::min_element(values.begin(), values.end());
  p.upper = *std::max_element(values.begin(), values.end());
  p.reward = [v = std::move(values)](int step, double, double) {
    const std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(std::max(step, 0)),
                                                v.size() - 1);
    return v[i];
  };
  p.markov = false;
  return p;
}

const Grid& kernel_grid(const Kernel& k) {
  return std::visit([](const auto& m) -> const Grid& { return m.grid; }, k);
}

double kernel_step_time(const Kernel& k) {
  if (const auto* m = std::get_if<LatticeModel>(&k)) return m->dt;
  return std::get<TransitionSpec>(k).period;
}

void validate_kernel(const Kernel& k) {
  std::visit([](const auto& m) { m.validate(); }, k);
}

StepResult continuation_sup(const LatticeFunction& f, const Kernel& k) {
  if (const auto* m = std::get_if<LatticeModel>(&k)) return step_sup(f, *m);
  const auto& spec = std::get<TransitionSpec>(k);
  StepResult first = generator_step_detailed(f, spec);
  LatticeFunction u = first.value;
  for (int s = 1; s < spec.substeps; ++s) u = generator_step(u, spec);
  first.value = std::move(u);
  return first;
}

LatticeFunction evaluate_payoff(const PayoffSpec& payoff, const Grid& grid, int step,
                                double time) {
  LatticeFunction x(grid.size(), 0.0);
  for (std::size_t j = 0; j < grid.size(); ++j) x[j] = payoff(step, time, grid.state(j));
  if (!x.finite()) throw ModelError("payoff is not finite on the grid");
  return x;
}

bool in_stopping_set(double value, double payoff) {
  return value - payoff <= kTieTolerance * (1.0 + std::abs(payoff));
}

const std::vector<bool>& StoppingRegion::at(int n) const {
  const int last = horizon();
  return stop[static_cast<std::size_t>(std::clamp(n, 0, last))];
}

int StoppingRegion::first_hit(int start_step, const std::vector<std::size_t>& path) const {
  for (std::size_t k = 0; k < path.size(); ++k) {
    const int l = start_step + static_cast<int>(k);
    if (terminal_forced && l >= horizon()) return horizon();
    if (at(l)[path[k]]) return l;
  }
  return terminal_forced ? horizon() : -1;
}

StoppingRegion extract_region(const ValueSurface& surface) {
  StoppingRegion region;
  region.stop.resize(surface.values.size());
  for (std::size_t n = 0; n < surface.values.size(); ++n) {
    auto& mask = region.stop[n];
    mask.resize(surface.grid.size());
    for (std::size_t j = 0; j < mask.size(); ++j)
      mask[j] = in_stopping_set(surface.values[n][j], surface.payoff[n][j]);
  }
  if (!region.stop.empty()) region.stop.back().assign(surface.grid.size(), true);
  return region;
}

std::vector<BoundaryPoint> exercise_boundary(const StoppingRegion& region, const Grid& grid,
                                             double step_time) {
  std::vector<BoundaryPoint> rows;
  const auto center = static_cast<long>(grid.center());
  for (int n = 0; n <= region.horizon(); ++n) {
    const auto& mask = region.stop[static_cast<std::size_t>(n)];
    long best = -1;
    for (std::size_t j = 0; j < mask.size(); ++j) {
      if (!mask[j]) continue;
      const long dj = std::abs(static_cast<long>(j) - center);
      if (best < 0 || dj < std::abs(best - center)) best = static_cast<long>(j);
    }
    if (best >= 0) rows.push_back({n * step_time, grid.state(static_cast<std::size_t>(best))});
  }
  return rows;
}

namespace {

template <class Combine>
SnellResult backward(const PayoffSpec& payoff, const Kernel& kernel, int horizon,
                     Combine combine) {
  if (horizon < 0) throw ModelError("horizon must be non-negative");
  validate_kernel(kernel);
  const Grid& grid = kernel_grid(kernel);
  const double tau = kernel_step_time(kernel);

  ValueSurface s;
  s.grid = grid;
  s.step_time = tau;
  const auto n_levels = static_cast<std::size_t>(horizon) + 1;
  s.values.resize(n_levels);
  s.payoff.resize(n_levels);
  s.rates.resize(static_cast<std::size_t>(horizon));
  for (int n = 0; n <= horizon; ++n)
    s.payoff[static_cast<std::size_t>(n)] = evaluate_payoff(payoff, grid, n, n * tau);

  s.values.back() = s.payoff.back();
  for (int n = horizon - 1; n >= 0; --n) {
    const auto un = static_cast<std::size_t>(n);
    StepResult cont = continuation_sup(s.values[un + 1], kernel);
    LatticeFunction v(grid.size(), 0.0);
    for (std::size_t j = 0; j < grid.size(); ++j) v[j] = combine(s.payoff[un][j], cont.value[j]);
    s.values[un] = std::move(v);
    s.rates[un] = std::move(cont.choice.rate);
  }

  SnellResult r{std::move(s), {}, kernel};
  r.region = extract_region(r.surface);
  return r;
}

}  // namespace

SnellResult snell_sup(const PayoffSpec& payoff, const Kernel& kernel, int horizon) {
  return backward(payoff, kernel, horizon, [](double x, double c) { return std::max(x, c); });
}

SnellResult snell_inf(const PayoffSpec& payoff, const Kernel& kernel, int horizon) {
  SnellResult r =
      backward(payoff, kernel, horizon, [](double x, double c) { return std::min(x, c); });
  // Here V_n <= X_n, so D_n membership tests X_n - V_n.
  const auto& s = r.surface;
  for (std::size_t n = 0; n + 1 < s.values.size(); ++n)
    for (std::size_t j = 0; j < s.grid.size(); ++j) {
      const double x = s.payoff[n][j];
      r.region.stop[n][j] = x - s.values[n][j] <= kTieTolerance * (1.0 + std::abs(x));
    }
  return r;
}

std::vector<LatticeFunction> wald_bellman_finite(const std::function<double(double)>& f,
                                                 const TransitionSpec& spec, int horizon) {
  if (horizon < 0) throw ModelError("horizon must be non-negative");
  spec.validate();
  const LatticeFunction f0 = LatticeFunction::sample(spec.grid, f);
  std::vector<LatticeFunction> F{f0};
  for (int n = 1; n <= horizon; ++n) F.push_back(pointwise_max(f0, transition_T(F.back(), spec)));
  return F;
}

double factorization_gap(const ValueSurface& surface, const std::vector<LatticeFunction>& F) {
  const int N = surface.horizon();
  if (static_cast<int>(F.size()) != N + 1) throw ModelError("Wald-Bellman sequence length mismatch");
  double gap = 0.0;
  for (int n = 0; n <= N; ++n)
    gap = std::max(gap, sup_distance(surface.values[static_cast<std::size_t>(n)],
                                     F[static_cast<std::size_t>(N - n)]));
  return gap;
}

CheckReport martingale_to_hit_check(const SnellResult& result) {
  const auto& s = result.surface;
  CheckReport rep;
  for (int n = 0; n < s.horizon(); ++n) {
    const auto un = static_cast<std::size_t>(n);
    const LatticeFunction cont = continuation_sup(s.values[un + 1], result.kernel).value;
    const auto& mask = result.region.stop[un];
    for (std::size_t j = 0; j < s.grid.size(); ++j) {
      if (mask[j]) continue;
      rep.worst = std::max(rep.worst, std::abs(s.values[un][j] - cont[j]));
    }
  }
  rep.passed = rep.worst < 1e-12;
  return rep;
}

double supermartingale_violation(const SnellResult& result) {
  const auto& s = result.surface;
  double worst = 0.0;
  for (int n = 0; n <= s.horizon(); ++n) {
    const auto un = static_cast<std::size_t>(n);
    for (std::size_t j = 0; j < s.grid.size(); ++j)
      worst = std::max(worst, s.payoff[un][j] - s.values[un][j]);
    if (n == s.horizon()) break;
    const LatticeFunction cont = continuation_sup(s.values[un + 1], result.kernel).value;
    for (std::size_t j = 0; j < s.grid.size(); ++j)
      worst = std::max(worst, cont[j] - s.values[un][j]);
  }
  return worst;
}

}  // namespace gstop
