#include "gstop/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace gstop {

GsdeCoefficients GsdeCoefficients::affine(double b0, double b1, double h0, double h1, double s0,
                                          double s1) {
  GsdeCoefficients c;
  c.name = "affine";
  c.drift = [=](double x) { return b0 + b1 * x; };
  c.qv_drift = [=](double x) { return h0 + h1 * x; };
  c.diffusion = [=](double x) { return s0 + s1 * x; };
  c.lip_const = std::abs(b1) + std::abs(h1) + std::abs(s1);
  return c;
}

GsdeCoefficients GsdeCoefficients::geometric(double mu, double s) {
  GsdeCoefficients c = affine(0.0, mu, 0.0, 0.0, 0.0, s);
  c.name = "geometric";
  return c;
}

namespace {

std::function<double(double)> interpolant(std::vector<double> xs, std::vector<double> ys) {
  return [xs = std::move(xs), ys = std::move(ys)](double x) {
    if (x <= xs.front()) return ys.front();
    if (x >= xs.back()) return ys.back();
    const auto it = std::upper_bound(xs.begin(), xs.end(), x);
    const std::size_t k = static_cast<std::size_t>(it - xs.begin());
    const double w = (x - xs[k - 1]) / (xs[k] - xs[k - 1]);
    return ys[k - 1] + w * (ys[k] - ys[k - 1]);
  };
}

double max_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
  double s = 0.0;
  for (std::size_t k = 1; k < xs.size(); ++k)
    s = std::max(s, std::abs(ys[k] - ys[k - 1]) / (xs[k] - xs[k - 1]));
  return s;
}

}  // namespace

GsdeCoefficients GsdeCoefficients::table(std::vector<double> x, std::vector<double> b,
                                         std::vector<double> h, std::vector<double> sigma) {
  if (x.size() < 2 || b.size() != x.size() || h.size() != x.size() || sigma.size() != x.size())
    throw ModelError("coefficient table needs >= 2 rows and equal column lengths");
  for (std::size_t k = 1; k < x.size(); ++k)
    if (!(x[k] > x[k - 1])) throw ModelError("coefficient table abscissae must increase");
  GsdeCoefficients c;
  c.name = "table";
  c.lip_const = max_slope(x, b) + max_slope(x, h) + max_slope(x, sigma);
  c.drift = interpolant(x, std::move(b));
  c.qv_drift = interpolant(x, std::move(h));
  c.diffusion = interpolant(std::move(x), std::move(sigma));
  return c;
}

StabilityError::StabilityError(std::size_t node_, double state_, double required_dt_,
                               double actual_dt_)
    : ModelError([&] {
        std::ostringstream os;
        os << "explicit substep unstable at node " << node_ << " (x=" << state_
           << "): dt=" << actual_dt_ << " exceeds required dt <= " << required_dt_;
        return os.str();
      }()),
      node(node_),
      state(state_),
      required_dt(required_dt_),
      actual_dt(actual_dt_) {}

namespace {

bool frozen(const Grid& grid, std::size_t j) {
  return grid.boundary == Boundary::absorbing && (j == 0 || j + 1 == grid.size());
}

// Stable dt bound at one node, over both band endpoints.
double node_stable_dt(const TransitionSpec& spec, double x) {
  const double dx = spec.grid.dx;
  const double b = spec.coeffs.drift(x);
  const double h = spec.coeffs.qv_drift(x);
  const double s = spec.coeffs.diffusion(x);
  double bound = std::numeric_limits<double>::infinity();
  for (double v : {spec.band.sigma2_min, spec.band.sigma2_max}) {
    const double rate = v * s * s / (dx * dx) + std::abs(b + v * h) / dx;
    if (rate > 0.0) bound = std::min(bound, 1.0 / rate);
  }
  return bound;
}

}  // namespace

double TransitionSpec::max_stable_dt() const {
  double bound = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < grid.size(); ++j) {
    if (frozen(grid, j)) continue;
    bound = std::min(bound, node_stable_dt(*this, grid.state(j)));
  }
  return bound;
}

void TransitionSpec::validate() const {
  grid.validate();
  band.validate();
  if (!coeffs.drift || !coeffs.qv_drift || !coeffs.diffusion)
    throw ModelError("coefficient functions b, h, sigma must all be set");
  if (!(period > 0.0) || !std::isfinite(period)) throw ModelError("period must be positive");
  if (substeps < 1) throw ModelError("substeps must be >= 1");

  for (std::size_t j = 0; j < grid.size(); ++j) {
    const double x = grid.state(j);
    if (!std::isfinite(coeffs.drift(x)) || !std::isfinite(coeffs.qv_drift(x)) ||
        !std::isfinite(coeffs.diffusion(x))) {
      std::ostringstream os;
      os << "coefficients not finite at node " << j << " (x=" << x << ")";
      throw ModelError(os.str());
    }
  }

  if (grid.size() > 1) {
    std::mt19937_64 rng(0x5eedULL);
    std::uniform_int_distribution<std::size_t> pick(0, grid.size() - 1);
    for (int trial = 0; trial < 64; ++trial) {
      const std::size_t a = pick(rng);
      const std::size_t c = pick(rng);
      if (a == c) continue;
      const double x = grid.state(a);
      const double y = grid.state(c);
      const double lhs = std::abs(coeffs.drift(x) - coeffs.drift(y)) +
                         std::abs(coeffs.qv_drift(x) - coeffs.qv_drift(y)) +
                         std::abs(coeffs.diffusion(x) - coeffs.diffusion(y));
      const double rhs = coeffs.lip_const * std::abs(x - y);
      if (lhs > rhs * (1.0 + 1e-12) + 1e-14) {
        std::ostringstream os;
        os << "declared Lipschitz constant " << coeffs.lip_const << " violated between x=" << x
           << " and y=" << y;
        throw ModelError(os.str());
      }
    }
  }

  const double dt = substep_dt();
  for (std::size_t j = 0; j < grid.size(); ++j) {
    if (frozen(grid, j)) continue;
    const double x = grid.state(j);
    const double bound = node_stable_dt(*this, x);
    if (dt > bound * (1.0 + 1e-12)) throw StabilityError(j, x, bound, dt);
  }
}

TransitionSpec TransitionSpec::with_stable_substeps(GsdeCoefficients coeffs, VolatilityBand band,
                                                    double period, Grid grid) {
  TransitionSpec spec{std::move(coeffs), band, period, 1, grid};
  const double bound = spec.max_stable_dt();
  while (spec.substep_dt() > bound * (1.0 + 1e-12)) {
    if (spec.substeps > (1 << 28)) throw ModelError("no stable power-of-two substep count found");
    spec.substeps *= 2;
  }
  spec.validate();
  return spec;
}

TransitionSpec TransitionSpec::scaled(int periods) const {
  if (periods < 1) throw ModelError("scaled() needs periods >= 1");
  TransitionSpec out = *this;
  out.period = period * periods;
  out.substeps = substeps * periods;
  return out;
}

namespace {

struct Weights {
  double up;
  double down;
};

struct NodeSlopes {
  double fwd;   // (up - mid) / dx
  double bwd;   // (mid - down) / dx
  double curv;  // (up - 2 mid + down) / dx^2
};

double hamiltonian(double mu, double a, const NodeSlopes& s) {
  return std::max(mu, 0.0) * s.fwd - std::max(-mu, 0.0) * s.bwd + a * s.curv;
}

// Maximising rate at one node. Candidates are the band endpoints and, when the
// drift changes sign inside the band, the rate cancelling it (the upwinded
// objective is only piecewise affine in v). Ties resolve to sigma2_max.
double best_rate(const TransitionSpec& spec, double b, double h, double sig2,
                 const NodeSlopes& s) {
  const double lo = spec.band.sigma2_min;
  const double hi = spec.band.sigma2_max;
  double best_v = hi;
  double best = hamiltonian(b + hi * h, 0.5 * hi * sig2, s);
  const double at_lo = hamiltonian(b + lo * h, 0.5 * lo * sig2, s);
  if (at_lo > best) {
    best = at_lo;
    best_v = lo;
  }
  if (h != 0.0) {
    const double v0 = -b / h;
    if (v0 > lo && v0 < hi) {
      const double at_v0 = hamiltonian(0.0, 0.5 * v0 * sig2, s);
      if (at_v0 > best) best_v = v0;
    }
  }
  return best_v;
}

template <class Sink>
void sweep(const LatticeFunction& f, const TransitionSpec& spec, Sink&& sink) {
  const Grid& grid = spec.grid;
  if (f.size() != grid.size()) throw ModelError("lattice function size does not match the grid");
  const double dx = grid.dx;
  const auto values = f.values();
  for (std::size_t j = 0; j < grid.size(); ++j) {
    if (frozen(grid, j)) {
      sink(j, f[j], 0.0, spec.band.sigma2_max, Weights{0.0, 0.0});
      continue;
    }
    const double x = grid.state(j);
    const Neighbours nb = neighbours(values, j);
    const NodeSlopes s{(nb.up - nb.mid) / dx, (nb.mid - nb.down) / dx,
                       ((nb.up - nb.mid) + (nb.down - nb.mid)) / (dx * dx)};
    const double b = spec.coeffs.drift(x);
    const double h = spec.coeffs.qv_drift(x);
    const double sig = spec.coeffs.diffusion(x);
    const double v = best_rate(spec, b, h, sig * sig, s);
    const double mu = b + v * h;
    const double a = 0.5 * v * sig * sig;
    const Weights w{a / (dx * dx) + std::max(mu, 0.0) / dx, a / (dx * dx) + std::max(-mu, 0.0) / dx};
    sink(j, nb.mid, hamiltonian(mu, a, s), v, w);
  }
}

}  // namespace

LatticeFunction generator_apply(const LatticeFunction& f, const TransitionSpec& spec) {
  LatticeFunction out(f.size(), 0.0);
  sweep(f, spec, [&](std::size_t j, double, double ham, double, const Weights&) { out[j] = ham; });
  return out;
}

StepResult generator_step_detailed(const LatticeFunction& f, const TransitionSpec& spec) {
  const double dt = spec.substep_dt();
  const auto values = f.values();
  StepResult out;
  out.value = LatticeFunction(f.size(), 0.0);
  auto& ch = out.choice;
  ch.rate.resize(f.size());
  ch.p_up.resize(f.size());
  ch.p_mid.resize(f.size());
  ch.p_down.resize(f.size());
  sweep(f, spec, [&](std::size_t j, double mid, double, double v, const Weights& w) {
    const Neighbours nb = neighbours(values, j);
    const double pu = dt * w.up;
    const double pd = dt * w.down;
    out.value[j] = frozen(spec.grid, j) ? mid : mid + pu * (nb.up - mid) + pd * (nb.down - mid);
    ch.rate[j] = v;
    ch.p_up[j] = pu;
    ch.p_down[j] = pd;
    ch.p_mid[j] = 1.0 - pu - pd;
  });
  return out;
}

LatticeFunction generator_step(const LatticeFunction& f, const TransitionSpec& spec) {
  return generator_step_detailed(f, spec).value;
}

LatticeFunction transition_T(const LatticeFunction& f, const TransitionSpec& spec) {
  spec.validate();
  LatticeFunction u = f;
  for (int k = 0; k < spec.substeps; ++k) u = generator_step(u, spec);
  return u;
}

LatticeFunction transition_power(const LatticeFunction& f, const TransitionSpec& spec, int k) {
  LatticeFunction u = f;
  for (int i = 0; i < k; ++i) u = transition_T(u, spec);
  return u;
}

MarkovConsistencyReport markov_consistency_check(const std::function<double(double)>& f,
                                                 const TransitionSpec& spec, int s, int t) {
  if (s < 1 || t < 1) throw ModelError("markov_consistency_check needs s, t >= 1");
  const LatticeFunction f0 = LatticeFunction::sample(spec.grid, f);
  const LatticeFunction direct = transition_T(f0, spec.scaled(s + t));
  const LatticeFunction composed = transition_T(transition_T(f0, spec.scaled(t)), spec.scaled(s));
  MarkovConsistencyReport r;
  r.discrepancy = sup_distance(direct, composed);
  r.passed = r.discrepancy < 1e-12;
  return r;
}

}  // namespace gstop
