#pragma once

// Markov dynamics dX = b(X)dt + h(X)d<B> + sigma(X)dB and the one-period
// transition operator T f(x) = E^[f(X_1^x)] on the lattice.

#include <functional>
#include <string>
#include <vector>

#include "gstop/gkernel.hpp"

namespace gstop {

struct GsdeCoefficients {
  std::string name = "custom";
  std::function<double(double)> drift;      // b
  std::function<double(double)> qv_drift;   // h, multiplies d<B>
  std::function<double(double)> diffusion;  // sigma
  double lip_const = 0.0;

  /// b(x) = b0 + b1 x, h(x) = h0 + h1 x, sigma(x) = s0 + s1 x.
  static GsdeCoefficients affine(double b0, double b1, double h0, double h1, double s0, double s1);
  /// b(x) = mu x, h = 0, sigma(x) = s x.
  static GsdeCoefficients geometric(double mu, double s);
  /// Piecewise-linear interpolation of tabulated b, h, sigma at increasing
  /// abscissae, flat extrapolation outside the table.
  static GsdeCoefficients table(std::vector<double> x, std::vector<double> b,
                                std::vector<double> h, std::vector<double> sigma);
};

class StabilityError : public ModelError {
 public:
  StabilityError(std::size_t node, double state, double required_dt, double actual_dt);
  std::size_t node;
  double state;
  double required_dt;
  double actual_dt;
};

struct TransitionSpec {
  GsdeCoefficients coeffs;
  VolatilityBand band;
  double period = 1.0;
  int substeps = 1;
  Grid grid;

  double substep_dt() const { return period / substeps; }

  /// Largest explicit substep that keeps every node's trinomial weights
  /// non-negative, over both band endpoints.
  double max_stable_dt() const;

  /// Checks finiteness of coefficients on the grid, the declared Lipschitz
  /// constant on deterministic random grid pairs, and stability. Throws
  /// StabilityError for the latter.
  void validate() const;

  /// Same coefficients and grid, with substeps set to the smallest power of
  /// two meeting stability for the given period.
  static TransitionSpec with_stable_substeps(GsdeCoefficients coeffs, VolatilityBand band,
                                             double period, Grid grid);

  /// Spec whose period is `periods` times this one, at the same substep size.
  TransitionSpec scaled(int periods) const;
};

/// One explicit substep of f + dt * sup_v [(b + v h) f' + v sigma^2 f'' / 2]
/// with upwinded drift and central diffusion differences.
LatticeFunction generator_step(const LatticeFunction& f, const TransitionSpec& spec);

/// Same as generator_step, also recording the maximising rate per node.
StepResult generator_step_detailed(const LatticeFunction& f, const TransitionSpec& spec);

/// Nonlinear generator sup_v [...] itself, evaluated nodewise (no dt factor).
LatticeFunction generator_apply(const LatticeFunction& f, const TransitionSpec& spec);

/// `substeps` generator steps: the discrete T over one period.
LatticeFunction transition_T(const LatticeFunction& f, const TransitionSpec& spec);

/// Repeated application: T^k f.
LatticeFunction transition_power(const LatticeFunction& f, const TransitionSpec& spec, int k);

struct MarkovConsistencyReport {
  double discrepancy = 0.0;
  bool passed = false;
};

/// Compares T^{s+t} f (one merged call) against T^s(T^t f) nodewise.
MarkovConsistencyReport markov_consistency_check(const std::function<double(double)>& f,
                                                 const TransitionSpec& spec, int s, int t);

}  // namespace gstop
