#pragma once

// Finite-horizon robust Snell envelope, stopping regions and the Markovian
// Wald-Bellman recursion.

#include <functional>
#include <variant>
#include <vector>

#include "gstop/dynamics.hpp"
#include "gstop/gkernel.hpp"

namespace gstop {

/// Reward X_n as a function of the lattice state. Markov payoffs ignore the
/// step and time; adapted payoffs may depend on both.
struct PayoffSpec {
  std::function<double(int step, double time, double x)> reward;
  bool markov = true;
  double lower = -1e300;
  double upper = 1e300;

  static PayoffSpec markov_payoff(std::function<double(double)> f);
  static PayoffSpec adapted(std::function<double(int step, double time, double x)> g);
  /// Spatially constant deterministic sequence X_0, X_1, ...; the last value
  /// repeats past the end.
  static PayoffSpec sequence(std::vector<double> values);

  double operator()(int step, double time, double x) const { return reward(step, time, x); }
};

/// One step of continuation: either the pure G-diffusion lattice or one
/// period of a G-SDE transition.
using Kernel = std::variant<LatticeModel, TransitionSpec>;

const Grid& kernel_grid(const Kernel& k);
/// Real time elapsed per step of the kernel.
double kernel_step_time(const Kernel& k);
void validate_kernel(const Kernel& k);

/// E^_n[f] one step back. For a TransitionSpec the recorded choice is that of
/// the first substep applied to f.
StepResult continuation_sup(const LatticeFunction& f, const Kernel& k);

LatticeFunction evaluate_payoff(const PayoffSpec& payoff, const Grid& grid, int step, double time);

inline constexpr double kTieTolerance = 1e-10;

/// V_n - X_n <= 1e-10 * (1 + |X_n|), the D_n membership test.
bool in_stopping_set(double value, double payoff);

struct ValueSurface {
  std::vector<LatticeFunction> values;  // V_0 .. V_N
  std::vector<std::vector<double>> rates;  // maximising rate per step 0 .. N-1
  std::vector<LatticeFunction> payoff;  // X_0 .. X_N
  Grid grid;
  double step_time = 1.0;

  int horizon() const { return static_cast<int>(values.size()) - 1; }
  double root() const { return values.front()[grid.center()]; }
};

struct StoppingRegion {
  std::vector<std::vector<bool>> stop;  // D_0 .. D_N as node masks
  bool terminal_forced = true;

  int horizon() const { return static_cast<int>(stop.size()) - 1; }
  /// Mask at step n; steps past the stored horizon reuse the last mask.
  const std::vector<bool>& at(int n) const;
  /// tau_j along a node path indexed from step j: first l >= j with
  /// path[l - j] in D_l. Returns -1 if the path never hits (only possible when
  /// the terminal step is not forced).
  int first_hit(int start_step, const std::vector<std::size_t>& path) const;
};

StoppingRegion extract_region(const ValueSurface& surface);

struct BoundaryPoint {
  double time;
  double state;
};

/// One row per step with a non-empty D_n: the exercising node nearest the root
/// state (the frontier facing x0; ties to the lower state). Steps with empty
/// D_n are skipped, so a region empty before the terminal step yields the
/// terminal row only.
std::vector<BoundaryPoint> exercise_boundary(const StoppingRegion& region, const Grid& grid,
                                             double step_time);

struct SnellResult {
  ValueSurface surface;
  StoppingRegion region;
  Kernel kernel;
};

/// V_N = X_N, V_n = max(X_n, E^_n[V_{n+1}]).
SnellResult snell_sup(const PayoffSpec& payoff, const Kernel& kernel, int horizon);

/// V_N = X_N, V_n = min(X_n, E^_n[V_{n+1}]): the upper value of the stopper
/// who minimises against an adversarial volatility.
SnellResult snell_inf(const PayoffSpec& payoff, const Kernel& kernel, int horizon);

/// F^0 = f, F^n = max(f, T F^{n-1}).
std::vector<LatticeFunction> wald_bellman_finite(const std::function<double(double)>& f,
                                                 const TransitionSpec& spec, int horizon);

/// max_n |V_n - F^{N-n}| nodewise between a Markov snell_sup surface and the
/// Wald-Bellman sequence of the same horizon.
double factorization_gap(const ValueSurface& surface, const std::vector<LatticeFunction>& F);

struct CheckReport {
  double worst = 0.0;
  bool passed = false;
};

/// Worst |V_n - E^_n[V_{n+1}]| over continuation nodes (outside D_n);
/// passes below 1e-12.
CheckReport martingale_to_hit_check(const SnellResult& result);

/// Worst violation of V_n >= X_n and V_n >= E^_n[V_{n+1}] (the latter only for
/// the sup envelope).
double supermartingale_violation(const SnellResult& result);

}  // namespace gstop
