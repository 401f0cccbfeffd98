#include "gstop/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace gstop::oracle {

BudgetExceeded::BudgetExceeded(const std::string& what, double estimate_)
    : ModelError([&] {
        std::ostringstream os;
        os << what << ": estimated " << estimate_ << " exceeds the enumeration budget";
        return os.str();
      }()),
      estimate(estimate_) {}

namespace {

// Trinomial successors of node j, written out independently of the kernel.
struct Successors {
  std::size_t down, mid, up;
  bool absorbed;
};

Successors successors(const Grid& grid, std::size_t j) {
  const std::size_t last = grid.size() - 1;
  if (last == 0) return {0, 0, 0, false};
  if (grid.boundary == Boundary::absorbing && (j == 0 || j == last)) return {j, j, j, true};
  const std::size_t down = j == 0 ? 1 : j - 1;
  const std::size_t up = j == last ? last - 1 : j + 1;
  return {down, j, up, false};
}

double linear_step(const std::vector<double>& next, const Successors& s, double p) {
  if (s.absorbed) return next[s.mid];
  return p * next[s.up] + (1.0 - 2.0 * p) * next[s.mid] + p * next[s.down];
}

struct Instance {
  std::vector<std::vector<double>> payoff;  // [step][node]
  double p_lo;
  double p_hi;
  double v_lo;
  double v_hi;
};

Instance prepare(const PayoffSpec& payoff, const LatticeModel& model, int horizon) {
  model.validate();
  if (horizon < 0) throw ModelError("horizon must be non-negative");
  Instance in;
  const double scale = model.dt / (2.0 * model.grid.dx * model.grid.dx);
  in.v_lo = model.band.sigma2_min;
  in.v_hi = model.band.sigma2_max;
  in.p_lo = in.v_lo * scale;
  in.p_hi = in.v_hi * scale;
  in.payoff.resize(static_cast<std::size_t>(horizon) + 1);
  for (int n = 0; n <= horizon; ++n) {
    auto& row = in.payoff[static_cast<std::size_t>(n)];
    row.resize(model.grid.size());
    for (std::size_t j = 0; j < row.size(); ++j) row[j] = payoff(n, n * model.dt, model.grid.state(j));
  }
  return in;
}

void check_rule_budget(std::size_t sites) {
  const double count = std::ldexp(1.0, static_cast<int>(sites));
  if (count > kRuleBudget) throw BudgetExceeded("stopping-rule enumeration", count);
}

// Backward evaluation over reachable sites. `pick` returns the value at a
// continuing site given the two endpoint averages.
template <class Pick>
double backward_over_sites(const Instance& in, const LatticeModel& model, int horizon,
                           const ReachableSet& rs, const std::vector<bool>& stop, Pick pick) {
  const std::size_t n_nodes = model.grid.size();
  std::vector<double> next = in.payoff[static_cast<std::size_t>(horizon)];
  std::vector<double> cur(n_nodes, 0.0);
  for (int n = horizon - 1; n >= 0; --n) {
    const auto& idx = rs.index[static_cast<std::size_t>(n)];
    for (std::size_t j = 0; j < n_nodes; ++j) {
      const int k = idx[j];
      if (k < 0) continue;
      const auto ks = static_cast<std::size_t>(k);
      if (stop[ks]) {
        cur[j] = in.payoff[static_cast<std::size_t>(n)][j];
        continue;
      }
      const Successors s = successors(model.grid, j);
      cur[j] = pick(ks, linear_step(next, s, in.p_lo), linear_step(next, s, in.p_hi));
    }
    std::swap(cur, next);
  }
  return next[model.grid.center()];
}

template <class Better>
Certificate enumerate(const PayoffSpec& payoff, const LatticeModel& model, int horizon,
                      Better better) {
  const Instance in = prepare(payoff, model, horizon);
  Certificate cert;
  cert.sites = reachable_sites(model, horizon);
  const std::size_t r = cert.sites.sites.size();
  check_rule_budget(r);

  const std::uint64_t count = std::uint64_t{1} << r;
  std::vector<bool> stop(r, false);
  bool have = false;
  std::uint64_t best_mask = 0;
  for (std::uint64_t mask = 0; mask < count; ++mask) {
    for (std::size_t k = 0; k < r; ++k) stop[k] = (mask >> k) & 1U;
    const double v = backward_over_sites(in, model, horizon, cert.sites, stop,
                                         [](std::size_t, double lo, double hi) {
                                           return std::max(lo, hi);
                                         });
    if (!have || better(v, cert.value)) {
      cert.value = v;
      best_mask = mask;
      have = true;
    }
  }
  cert.rules_enumerated = count;
  cert.rule.stop.assign(r, false);
  for (std::size_t k = 0; k < r; ++k) cert.rule.stop[k] = (best_mask >> k) & 1U;
  evaluate_rule(payoff, model, horizon, cert.sites, cert.rule, &cert.policy);
  return cert;
}

}  // namespace

ReachableSet reachable_sites(const LatticeModel& model, int horizon) {
  model.validate();
  ReachableSet rs;
  const std::size_t n_nodes = model.grid.size();
  rs.index.assign(static_cast<std::size_t>(std::max(horizon, 0)) + 1,
                  std::vector<int>(n_nodes, -1));
  std::vector<bool> live(n_nodes, false);
  live[model.grid.center()] = true;
  for (int n = 0; n < horizon; ++n) {
    std::vector<bool> next(n_nodes, false);
    for (std::size_t j = 0; j < n_nodes; ++j) {
      if (!live[j]) continue;
      rs.index[static_cast<std::size_t>(n)][j] = static_cast<int>(rs.sites.size());
      rs.sites.push_back({n, j});
      const Successors s = successors(model.grid, j);
      next[s.down] = next[s.mid] = next[s.up] = true;
    }
    live = std::move(next);
  }
  return rs;
}

double evaluate_linear(const PayoffSpec& payoff, const LatticeModel& model, int horizon,
                       const ReachableSet& sites, const StoppingRule& rule,
                       const ScenarioPolicy& policy) {
  const Instance in = prepare(payoff, model, horizon);
  if (rule.stop.size() != sites.sites.size() || policy.rate.size() != sites.sites.size())
    throw ModelError("rule/policy size does not match the reachable set");
  const double scale = model.dt / (2.0 * model.grid.dx * model.grid.dx);
  if (sites.sites.empty()) return in.payoff.front()[model.grid.center()];
  return backward_over_sites(in, model, horizon, sites, rule.stop,
                             [&](std::size_t k, double lo, double hi) {
                               const double v = policy.rate[k];
                               if (v == in.v_lo) return lo;
                               if (v == in.v_hi) return hi;
                               // Interior rates interpolate the affine objective.
                               const double w = (v * scale - in.p_lo) / (in.p_hi - in.p_lo);
                               return lo + w * (hi - lo);
                             });
}

double evaluate_rule(const PayoffSpec& payoff, const LatticeModel& model, int horizon,
                     const ReachableSet& sites, const StoppingRule& rule, ScenarioPolicy* argmax) {
  const Instance in = prepare(payoff, model, horizon);
  if (rule.stop.size() != sites.sites.size())
    throw ModelError("rule size does not match the reachable set");
  if (argmax) argmax->rate.assign(sites.sites.size(), in.v_hi);
  if (sites.sites.empty()) return in.payoff.front()[model.grid.center()];
  return backward_over_sites(in, model, horizon, sites, rule.stop,
                             [&](std::size_t k, double lo, double hi) {
                               const bool take_hi = hi >= lo;
                               if (argmax) argmax->rate[k] = take_hi ? in.v_hi : in.v_lo;
                               return take_hi ? hi : lo;
                             });
}

Certificate enumerate_sup(const PayoffSpec& payoff, const LatticeModel& model, int horizon) {
  return enumerate(payoff, model, horizon, [](double v, double best) { return v > best; });
}

Certificate enumerate_infsup(const PayoffSpec& payoff, const LatticeModel& model, int horizon) {
  return enumerate(payoff, model, horizon, [](double v, double best) { return v < best; });
}

double enumerate_pairs(const PayoffSpec& payoff, const LatticeModel& model, int horizon,
                       LoopOrder order, bool minimize_rules) {
  if (minimize_rules && order != LoopOrder::rules_outer)
    throw ModelError("inf-sup pair enumeration requires rules in the outer loop");
  const ReachableSet rs = reachable_sites(model, horizon);
  const std::size_t r = rs.sites.size();
  const double pairs = std::ldexp(1.0, static_cast<int>(2 * r)) * std::max<std::size_t>(r, 1);
  if (pairs > kPairBudget) throw BudgetExceeded("rule x policy enumeration", pairs);
  const Instance in = prepare(payoff, model, horizon);
  if (r == 0) return in.payoff.front()[model.grid.center()];

  const std::uint64_t count = std::uint64_t{1} << r;
  std::vector<bool> stop(r);
  std::vector<bool> hi(r);
  auto linear = [&](std::uint64_t rule_mask, std::uint64_t policy_mask) {
    for (std::size_t k = 0; k < r; ++k) {
      stop[k] = (rule_mask >> k) & 1U;
      hi[k] = (policy_mask >> k) & 1U;
    }
    return backward_over_sites(in, model, horizon, rs, stop,
                               [&](std::size_t k, double lo_v, double hi_v) {
                                 return hi[k] ? hi_v : lo_v;
                               });
  };

  double outer_best = 0.0;
  for (std::uint64_t a = 0; a < count; ++a) {
    double inner = -INFINITY;
    for (std::uint64_t b = 0; b < count; ++b) {
      const double v = order == LoopOrder::rules_outer ? linear(a, b) : linear(b, a);
      inner = std::max(inner, v);
    }
    if (a == 0)
      outer_best = inner;
    else
      outer_best = minimize_rules ? std::min(outer_best, inner) : std::max(outer_best, inner);
  }
  return outer_best;
}

std::vector<LatticeFunction> classical_snell(const PayoffSpec& payoff, const LatticeModel& model,
                                             int horizon) {
  if (!model.band.degenerate()) throw ModelError("classical_snell requires a degenerate band");
  const Instance in = prepare(payoff, model, horizon);
  const std::size_t n_nodes = model.grid.size();
  std::vector<LatticeFunction> V(static_cast<std::size_t>(horizon) + 1);
  V.back() = LatticeFunction(in.payoff.back());
  for (int n = horizon - 1; n >= 0; --n) {
    const auto un = static_cast<std::size_t>(n);
    std::vector<double> next(V[un + 1].begin(), V[un + 1].end());
    std::vector<double> cur(n_nodes);
    for (std::size_t j = 0; j < n_nodes; ++j)
      cur[j] = std::max(in.payoff[un][j], linear_step(next, successors(model.grid, j), in.p_lo));
    V[un] = LatticeFunction(std::move(cur));
  }
  return V;
}

std::vector<LatticeFunction> classical_snell(const PayoffSpec& payoff, const TransitionSpec& spec,
                                             int horizon) {
  if (!spec.band.degenerate()) throw ModelError("classical_snell requires a degenerate band");
  spec.validate();
  const Grid& grid = spec.grid;
  const std::size_t n_nodes = grid.size();
  const double dt = spec.substep_dt();
  const double dx = grid.dx;
  const double v = spec.band.sigma2_min;

  // Constant linear transition weights per node.
  std::vector<double> w_up(n_nodes, 0.0), w_dn(n_nodes, 0.0);
  std::vector<Successors> succ(n_nodes);
  for (std::size_t j = 0; j < n_nodes; ++j) {
    succ[j] = successors(grid, j);
    if (succ[j].absorbed) continue;
    const double x = grid.state(j);
    const double mu = spec.coeffs.drift(x) + v * spec.coeffs.qv_drift(x);
    const double sig = spec.coeffs.diffusion(x);
    const double diff = 0.5 * v * sig * sig * dt / (dx * dx);
    w_up[j] = diff + (mu > 0.0 ? mu * dt / dx : 0.0);
    w_dn[j] = diff + (mu < 0.0 ? -mu * dt / dx : 0.0);
  }

  std::vector<LatticeFunction> V(static_cast<std::size_t>(horizon) + 1);
  auto payoff_at = [&](int n) {
    std::vector<double> x(n_nodes);
    for (std::size_t j = 0; j < n_nodes; ++j) x[j] = payoff(n, n * spec.period, grid.state(j));
    return x;
  };
  std::vector<double> u = payoff_at(horizon);
  V.back() = LatticeFunction(u);
  std::vector<double> tmp(n_nodes);
  for (int n = horizon - 1; n >= 0; --n) {
    for (int s = 0; s < spec.substeps; ++s) {
      for (std::size_t j = 0; j < n_nodes; ++j) {
        const Successors& sj = succ[j];
        if (sj.absorbed) {
          tmp[j] = u[j];
          continue;
        }
        tmp[j] = w_up[j] * u[sj.up] + (1.0 - w_up[j] - w_dn[j]) * u[j] + w_dn[j] * u[sj.down];
      }
      std::swap(u, tmp);
    }
    const std::vector<double> x = payoff_at(n);
    for (std::size_t j = 0; j < n_nodes; ++j) u[j] = std::max(u[j], x[j]);
    V[static_cast<std::size_t>(n)] = LatticeFunction(u);
  }
  return V;
}

double crr_american_put(double s0, double strike, double sigma, double rate, double maturity,
                        int steps) {
  if (steps < 1) throw ModelError("CRR needs at least one step");
  const double dt = maturity / steps;
  const double up = std::exp(sigma * std::sqrt(dt));
  const double down = 1.0 / up;
  const double growth = std::exp(rate * dt);
  const double q = (growth - down) / (up - down);
  const double disc = 1.0 / growth;
  std::vector<double> v(static_cast<std::size_t>(steps) + 1);
  for (int k = 0; k <= steps; ++k)
    v[static_cast<std::size_t>(k)] =
        std::max(strike - s0 * std::pow(up, k) * std::pow(down, steps - k), 0.0);
  for (int n = steps - 1; n >= 0; --n) {
    for (int k = 0; k <= n; ++k) {
      const auto uk = static_cast<std::size_t>(k);
      const double cont = disc * (q * v[uk + 1] + (1.0 - q) * v[uk]);
      const double ex = strike - s0 * std::pow(up, k) * std::pow(down, n - k);
      v[uk] = std::max(cont, ex);
    }
  }
  return v[0];
}

LatticeFunction fd_american_put(const Grid& grid, double strike, double sigma, double rate,
                                double maturity, int time_steps) {
  if (time_steps < 1) throw ModelError("finite-difference reference needs time steps");
  const std::size_t n = grid.size();
  if (n < 3) throw ModelError("finite-difference reference needs at least 3 nodes");
  const double dt = maturity / time_steps;
  const double dx = grid.dx;
  std::vector<double> s = grid.states();
  std::vector<double> psi(n);
  for (std::size_t j = 0; j < n; ++j) psi[j] = std::max(strike - s[j], 0.0);

  // L u_j = a_j u_{j-1} + b_j u_j + c_j u_{j+1}, the Black-Scholes operator.
  std::vector<double> a(n, 0.0), b(n, 0.0), c(n, 0.0);
  for (std::size_t j = 1; j + 1 < n; ++j) {
    const double diff = 0.5 * sigma * sigma * s[j] * s[j] / (dx * dx);
    const double conv = rate * s[j] / (2.0 * dx);
    a[j] = diff - conv;
    b[j] = -2.0 * diff - rate;
    c[j] = diff + conv;
  }

  std::vector<double> u = psi;
  std::vector<double> rhs(n);
  for (int step = 0; step < time_steps; ++step) {
    const double theta = step < 4 ? 1.0 : 0.5;  // Rannacher start-up
    for (std::size_t j = 1; j + 1 < n; ++j)
      rhs[j] = u[j] + (1.0 - theta) * dt * (a[j] * u[j - 1] + b[j] * u[j] + c[j] * u[j + 1]);
    std::vector<double> x = u;
    x.front() = psi.front();
    x.back() = psi.back();
    const double omega = 1.5;
    for (int it = 0; it < 10000; ++it) {
      double change = 0.0;
      for (std::size_t j = 1; j + 1 < n; ++j) {
        const double diag = 1.0 - theta * dt * b[j];
        const double off = theta * dt * (a[j] * x[j - 1] + c[j] * x[j + 1]);
        const double gs = (rhs[j] + off) / diag;
        const double next = std::max(psi[j], x[j] + omega * (gs - x[j]));
        change = std::max(change, std::abs(next - x[j]));
        x[j] = next;
      }
      if (change < 1e-13) break;
    }
    u = std::move(x);
  }
  return LatticeFunction(std::move(u));
}

std::vector<LatticeFunction> random_dominator(const PayoffSpec& payoff, const Kernel& kernel,
                                              int horizon, std::uint64_t seed, double scale) {
  if (horizon < 0) throw ModelError("horizon must be non-negative");
  if (scale < 0.0) throw ModelError("dominator perturbation scale must be non-negative");
  validate_kernel(kernel);
  const Grid& grid = kernel_grid(kernel);
  const double tau = kernel_step_time(kernel);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto perturb = [&](LatticeFunction& f) {
    for (std::size_t j = 0; j < f.size(); ++j) f[j] += scale * unit(rng);
  };

  std::vector<LatticeFunction> U(static_cast<std::size_t>(horizon) + 1);
  U.back() = evaluate_payoff(payoff, grid, horizon, horizon * tau);
  perturb(U.back());
  for (int n = horizon - 1; n >= 0; --n) {
    const auto un = static_cast<std::size_t>(n);
    const LatticeFunction x = evaluate_payoff(payoff, grid, n, n * tau);
    U[un] = pointwise_max(x, continuation_sup(U[un + 1], kernel).value);
    perturb(U[un]);
  }
  return U;
}

LatticeFunction random_superharmonic_dominator(const std::function<double(double)>& f,
                                               const TransitionSpec& spec, double discount,
                                               const LatticeFunction& F, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double shift = 0.5 * unit(rng);
  LatticeFunction lifted = LatticeFunction::sample(spec.grid, f);
  const double amp = 0.2 * unit(rng);
  for (std::size_t j = 0; j < lifted.size(); ++j) lifted[j] += amp * unit(rng);

  LatticeFunction G = lifted;
  for (int it = 0; it < 100000; ++it) {
    const LatticeFunction next = pointwise_max(lifted, discount * transition_T(G, spec));
    const double inc = sup_distance(next, G);
    G = next;
    if (inc < 1e-13) break;
  }
  LatticeFunction shifted = F;
  for (std::size_t j = 0; j < shifted.size(); ++j) shifted[j] += shift;
  return pointwise_min(shifted, G);
}

nlohmann::json to_json(const Certificate& c) {
  nlohmann::json sites = nlohmann::json::array();
  for (const auto& s : c.sites.sites) sites.push_back({s.step, s.node});
  return {{"value", c.value},
          {"rule", c.rule.stop},
          {"policy", c.policy.rate},
          {"sites", sites},
          {"horizon", c.sites.index.empty() ? 0 : c.sites.index.size() - 1},
          {"grid_size", c.sites.index.empty() ? 0 : c.sites.index.front().size()},
          {"rules_enumerated", c.rules_enumerated}};
}

Certificate certificate_from_json(const nlohmann::json& j) {
  Certificate c;
  c.value = j.at("value").get<double>();
  c.rule.stop = j.at("rule").get<std::vector<bool>>();
  c.policy.rate = j.at("policy").get<std::vector<double>>();
  c.rules_enumerated = j.at("rules_enumerated").get<std::uint64_t>();
  for (const auto& s : j.at("sites"))
    c.sites.sites.push_back({s.at(0).get<int>(), s.at(1).get<std::size_t>()});
  c.sites.index.assign(j.at("horizon").get<std::size_t>() + 1,
                       std::vector<int>(j.at("grid_size").get<std::size_t>(), -1));
  for (std::size_t k = 0; k < c.sites.sites.size(); ++k) {
    const auto& s = c.sites.sites[k];
    c.sites.index[static_cast<std::size_t>(s.step)][s.node] = static_cast<int>(k);
  }
  return c;
}

}  // namespace gstop::oracle
