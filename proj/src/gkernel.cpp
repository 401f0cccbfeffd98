#include "gstop/gkernel.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace gstop {

VolatilityBand VolatilityBand::make(double sigma2_min, double sigma2_max) {
  VolatilityBand band{sigma2_min, sigma2_max};
  band.validate();
  return band;
}

void VolatilityBand::validate() const {
  if (!(sigma2_min > 0.0) || !(sigma2_min <= sigma2_max) || !std::isfinite(sigma2_max)) {
    std::ostringstream os;
    os << "volatility band requires 0 < sigma2_min <= sigma2_max, got [" << sigma2_min << ", "
       << sigma2_max << "]";
    throw ModelError(os.str());
  }
}

const char* to_string(Boundary b) {
  return b == Boundary::reflecting ? "reflecting" : "absorbing";
}

Boundary boundary_from_string(const std::string& s) {
  if (s == "reflecting") return Boundary::reflecting;
  if (s == "absorbing") return Boundary::absorbing;
  throw ModelError("unknown boundary policy '" + s + "'");
}

std::vector<double> Grid::states() const {
  std::vector<double> xs(size());
  for (std::size_t j = 0; j < xs.size(); ++j) xs[j] = state(j);
  return xs;
}

void Grid::validate() const {
  if (!(dx > 0.0) || !std::isfinite(dx)) throw ModelError("grid spacing dx must be positive");
  if (half_width < 0) throw ModelError("grid half_width must be non-negative");
  if (!std::isfinite(x0)) throw ModelError("grid root state x0 must be finite");
}

LatticeFunction LatticeFunction::sample(const Grid& grid, const std::function<double(double)>& f) {
  std::vector<double> v(grid.size());
  for (std::size_t j = 0; j < v.size(); ++j) v[j] = f(grid.state(j));
  return LatticeFunction(std::move(v));
}

bool LatticeFunction::finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

double LatticeFunction::max() const { return *std::max_element(values_.begin(), values_.end()); }
double LatticeFunction::min() const { return *std::min_element(values_.begin(), values_.end()); }

namespace {

template <class Op>
LatticeFunction zip(const LatticeFunction& f, const LatticeFunction& g, Op op) {
  if (f.size() != g.size()) throw ModelError("lattice functions differ in size");
  std::vector<double> out(f.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = op(f[i], g[i]);
  return LatticeFunction(std::move(out));
}

}  // namespace

LatticeFunction operator-(const LatticeFunction& f) { return -1.0 * f; }
LatticeFunction operator+(const LatticeFunction& f, const LatticeFunction& g) {
  return zip(f, g, [](double a, double b) { return a + b; });
}
LatticeFunction operator-(const LatticeFunction& f, const LatticeFunction& g) {
  return zip(f, g, [](double a, double b) { return a - b; });
}
LatticeFunction operator*(double s, const LatticeFunction& f) {
  std::vector<double> out(f.begin(), f.end());
  for (auto& v : out) v *= s;
  return LatticeFunction(std::move(out));
}
LatticeFunction pointwise_max(const LatticeFunction& f, const LatticeFunction& g) {
  return zip(f, g, [](double a, double b) { return std::max(a, b); });
}
LatticeFunction pointwise_min(const LatticeFunction& f, const LatticeFunction& g) {
  return zip(f, g, [](double a, double b) { return std::min(a, b); });
}
double sup_norm(const LatticeFunction& f) {
  double m = 0.0;
  for (double v : f) m = std::max(m, std::abs(v));
  return m;
}
double sup_distance(const LatticeFunction& f, const LatticeFunction& g) { return sup_norm(f - g); }

void LatticeModel::validate() const {
  grid.validate();
  band.validate();
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ModelError("lattice step dt must be positive");
  if (n_steps < 0) throw ModelError("lattice n_steps must be non-negative");
  if (grid.dx * grid.dx < band.sigma2_max * dt * (1.0 - 1e-14)) {
    std::ostringstream os;
    os << "lattice violates dx^2 >= sigma2_max*dt: dx^2=" << grid.dx * grid.dx
       << ", sigma2_max*dt=" << band.sigma2_max * dt;
    throw ModelError(os.str());
  }
}

double g_function(double a, const VolatilityBand& band) {
  return 0.5 * (band.sigma2_max * std::max(a, 0.0) - band.sigma2_min * std::max(-a, 0.0));
}

Neighbours neighbours(std::span<const double> f, std::size_t j) {
  const std::size_t last = f.size() - 1;
  if (last == 0) return {f[0], f[0], f[0]};
  const double down = j == 0 ? f[1] : f[j - 1];
  const double up = j == last ? f[last - 1] : f[j + 1];
  return {down, f[j], up};
}

namespace {

enum class Extremum { sup, inf };

StepResult step_extremum(const LatticeFunction& f, const LatticeModel& model, Extremum which) {
  model.validate();
  const std::size_t n = model.grid.size();
  if (f.size() != n) throw ModelError("lattice function size does not match the grid");

  const double scale = model.dt / (2.0 * model.grid.dx * model.grid.dx);
  const double p_lo = model.band.sigma2_min * scale;
  const double p_hi = model.band.sigma2_max * scale;
  const bool absorbing = model.grid.boundary == Boundary::absorbing;

  StepResult out;
  out.value = LatticeFunction(n, 0.0);
  auto& ch = out.choice;
  ch.rate.resize(n);
  ch.p_up.resize(n);
  ch.p_mid.resize(n);
  ch.p_down.resize(n);

  const auto values = f.values();
  for (std::size_t j = 0; j < n; ++j) {
    if (absorbing && (j == 0 || j + 1 == n)) {
      out.value[j] = f[j];
      ch.rate[j] = which == Extremum::sup ? model.band.sigma2_max : model.band.sigma2_min;
      ch.p_up[j] = 0.0;
      ch.p_mid[j] = 1.0;
      ch.p_down[j] = 0.0;
      continue;
    }
    const Neighbours nb = neighbours(values, j);
    // Written as increments so constants are reproduced without rounding.
    const double curvature = (nb.up - nb.mid) + (nb.down - nb.mid);
    const double at_lo = nb.mid + p_lo * curvature;
    const double at_hi = nb.mid + p_hi * curvature;
    bool pick_hi;
    if (which == Extremum::sup) {
      pick_hi = at_hi >= at_lo;
    } else {
      pick_hi = at_hi < at_lo;
    }
    const double p = pick_hi ? p_hi : p_lo;
    out.value[j] = pick_hi ? at_hi : at_lo;
    ch.rate[j] = pick_hi ? model.band.sigma2_max : model.band.sigma2_min;
    ch.p_up[j] = p;
    ch.p_down[j] = p;
    ch.p_mid[j] = 1.0 - 2.0 * p;
  }
  return out;
}

}  // namespace

StepResult step_sup(const LatticeFunction& f, const LatticeModel& model) {
  return step_extremum(f, model, Extremum::sup);
}

StepResult step_inf(const LatticeFunction& f, const LatticeModel& model) {
  return step_extremum(f, model, Extremum::inf);
}

double maximal_expectation(const ScalarFunction& phi, const VolatilityBand& band, double t,
                           int samples) {
  band.validate();
  if (!(t >= 0.0)) throw ModelError("maximal_expectation requires t >= 0");
  if (samples < 1) throw ModelError("maximal_expectation requires at least one sample");
  const double lo = band.sigma2_min * t;
  const double hi = band.sigma2_max * t;
  double best = std::max(phi.f(lo), phi.f(hi));
  if (hi > lo) {
    for (int k = 1; k < samples; ++k) {
      const double x = lo + (hi - lo) * static_cast<double>(k) / samples;
      best = std::max(best, phi.f(x));
    }
    for (double x : phi.hints) {
      if (x >= lo && x <= hi) best = std::max(best, phi.f(x));
    }
  }
  return best;
}

}  // namespace gstop
