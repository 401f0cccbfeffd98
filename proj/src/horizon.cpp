#include "gstop/horizon.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace gstop {

void IterationConfig::validate() const {
  if (!(tol > 0.0)) throw ModelError("iteration tol must be positive");
  if (max_iter < 1) throw ModelError("iteration max_iter must be >= 1");
  if (!(discount > 0.0 && discount <= 1.0)) throw ModelError("discount must lie in (0, 1]");
}

ValueIteration value_iterate_from(const std::function<double(double)>& f,
                                  const LatticeFunction& initial, const TransitionSpec& spec,
                                  const IterationConfig& cfg) {
  cfg.validate();
  spec.validate();
  const LatticeFunction f0 = LatticeFunction::sample(spec.grid, f);
  if (initial.size() != f0.size()) throw ModelError("initial guess size does not match the grid");

  ValueIteration out;
  out.F = initial;
  for (int it = 1; it <= cfg.max_iter; ++it) {
    const LatticeFunction next = pointwise_max(f0, cfg.discount * transition_T(out.F, spec));
    double inc = 0.0;
    for (std::size_t j = 0; j < next.size(); ++j) {
      const double d = next[j] - out.F[j];
      out.min_increment = std::min(out.min_increment, d);
      inc = std::max(inc, std::abs(d));
    }
    out.F = next;
    out.iterations = it;
    if (inc < cfg.tol) {
      out.converged = true;
      break;
    }
  }
  out.residual = sup_distance(out.F, pointwise_max(f0, cfg.discount * transition_T(out.F, spec)));
  out.converged = out.converged && out.residual < cfg.tol;
  return out;
}

ValueIteration value_iterate(const std::function<double(double)>& f, const TransitionSpec& spec,
                             const IterationConfig& cfg) {
  return value_iterate_from(f, LatticeFunction::sample(spec.grid, f), spec, cfg);
}

MultiplicityReport fixed_point_multiplicity(const std::function<double(double)>& f,
                                            const TransitionSpec& spec,
                                            const IterationConfig& cfg) {
  MultiplicityReport rep;
  rep.from_payoff = value_iterate(f, spec, cfg);
  const LatticeFunction f0 = LatticeFunction::sample(spec.grid, f);
  const double top = std::max(f0.max(), 0.0) + 1.0;
  rep.from_above = value_iterate_from(f, LatticeFunction(f0.size(), top), spec, cfg);
  rep.gap = sup_distance(rep.from_payoff.F, rep.from_above.F);
  rep.multiple = rep.from_payoff.converged && rep.from_above.converged && rep.gap > 10.0 * cfg.tol;
  return rep;
}

TransitionSpec dyadic_substep_spec(const TransitionSpec& spec, int n) {
  if (n < 0) throw ModelError("dyadic level must be non-negative");
  const int parts = 1 << n;
  if (spec.substeps % parts != 0) {
    std::ostringstream os;
    os << "substeps=" << spec.substeps << " is not divisible by 2^" << n;
    throw ModelError(os.str());
  }
  TransitionSpec out = spec;
  out.period = spec.period / parts;
  out.substeps = spec.substeps / parts;
  return out;
}

LatticeFunction superharmonic_envelope(const std::function<double(double)>& g,
                                       const TransitionSpec& spec, int n_max, double discount,
                                       std::vector<LatticeFunction>* levels) {
  if (n_max < 0) throw ModelError("n_max must be non-negative");
  if (!(discount > 0.0 && discount <= 1.0)) throw ModelError("discount must lie in (0, 1]");
  // Level n costs 4^n steps of 2^{-n} periods: 2^n * substeps generator steps.
  const double cost = std::ldexp(1.0, n_max + 1) * spec.substeps * static_cast<double>(spec.grid.size());
  if (n_max > kEnvelopeLevelCap || cost > 1e10) {
    std::ostringstream os;
    os << "superharmonic_envelope n_max=" << n_max << " exceeds the cost cap (estimated " << cost
       << " node updates, level cap " << kEnvelopeLevelCap << ")";
    throw ModelError(os.str());
  }
  spec.validate();
  dyadic_substep_spec(spec, n_max);  // divisibility check

  LatticeFunction current = LatticeFunction::sample(spec.grid, g);
  if (levels) levels->assign(1, current);
  for (int n = 1; n <= n_max; ++n) {
    const TransitionSpec fine = dyadic_substep_spec(spec, n);
    const double step_discount = std::pow(discount, std::ldexp(1.0, -n));
    const long long count = 1LL << (2 * n);
    LatticeFunction propagated = current;
    LatticeFunction best = current;
    double weight = 1.0;
    for (long long k = 1; k <= count; ++k) {
      propagated = transition_T(propagated, fine);
      weight *= step_discount;
      best = pointwise_max(best, weight * propagated);
    }
    current = std::move(best);
    if (levels) levels->push_back(current);
  }
  return current;
}

SuperharmonicReport superharmonic_check(const LatticeFunction& F, const TransitionSpec& spec,
                                        double discount) {
  SuperharmonicReport rep;
  LatticeFunction power = F;
  double factor = 1.0;
  for (int k = 1; k <= 5; ++k) {
    power = transition_T(power, spec);
    factor *= discount;
    double gap = 0.0;
    for (std::size_t j = 0; j < F.size(); ++j) gap = std::max(gap, factor * power[j] - F[j]);
    rep.power_gaps.push_back(gap);
    if (k == 1) rep.gap = gap;
  }
  rep.passed = std::all_of(rep.power_gaps.begin(), rep.power_gaps.end(),
                           [](double g) { return g < 1e-10; });
  return rep;
}

StoppingRegion stationary_region(const LatticeFunction& F, const LatticeFunction& f) {
  StoppingRegion region;
  region.terminal_forced = false;
  std::vector<bool> mask(F.size());
  for (std::size_t j = 0; j < F.size(); ++j) mask[j] = in_stopping_set(F[j], f[j]);
  region.stop.push_back(std::move(mask));
  return region;
}

TailReport admissibility_tail(const StoppingRegion& region, const TransitionSpec& spec,
                              const std::vector<int>& horizons) {
  spec.validate();
  const std::size_t n_nodes = spec.grid.size();
  auto outside = [&](int n) {
    const auto& mask = region.at(n);
    if (mask.size() != n_nodes) throw ModelError("region mask size does not match the grid");
    LatticeFunction w(n_nodes, 0.0);
    const bool forced = region.terminal_forced && n >= region.horizon();
    for (std::size_t j = 0; j < n_nodes; ++j) w[j] = (forced || mask[j]) ? 0.0 : 1.0;
    return w;
  };

  TailReport rep;
  for (int N : horizons) {
    if (N < 0) throw ModelError("tail horizons must be non-negative");
    LatticeFunction w = outside(N);
    for (int n = N - 1; n >= 0; --n) {
      const LatticeFunction cont = transition_T(w, spec);
      const LatticeFunction ind = outside(n);
      for (std::size_t j = 0; j < n_nodes; ++j) w[j] = ind[j] * cont[j];
    }
    rep.horizons.push_back(N);
    rep.root_tail.push_back(w[spec.grid.center()]);
    rep.max_tail.push_back(w.max());
  }
  rep.decreasing = !rep.root_tail.empty();
  for (std::size_t k = 1; k < rep.root_tail.size(); ++k)
    if (rep.root_tail[k] > rep.root_tail[k - 1] + 1e-15) rep.decreasing = false;
  rep.vanishing = !rep.root_tail.empty() && rep.root_tail.back() < 1e-6;
  return rep;
}

}  // namespace gstop
