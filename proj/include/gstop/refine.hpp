#pragma once

// Continuous-time stopping value on [0, horizon]: Bermudan ladders on dyadic
// exercise dates, and the obstacle problem for the G-generator.

#include <cstdint>
#include <vector>

#include "gstop/dynamics.hpp"
#include "gstop/snell.hpp"

namespace gstop {

struct LadderLevel {
  int level = 0;            // exercise dates k / 2^level
  double root_value = 0.0;
  SnellResult result;
};

struct RefinementLadder {
  std::vector<LadderLevel> levels;
  double horizon = 1.0;
  int kernel_steps = 0;          // generator steps over [0, horizon], shared by all levels
  double max_violation = 0.0;    // largest V_0^n - V_0^{n+1}
  bool monotone = true;          // max_violation <= 1e-12
  std::vector<double> increments;
};

/// For each n in [n_min, n_max], a Snell envelope with 2^n exercise dates over
/// spec.period. The kernel substep is the same at every level
/// (spec.substeps generator steps per horizon, divisible by 2^n_max), so only
/// the exercise dates change. Levels run concurrently.
RefinementLadder dyadic_ladder(const PayoffSpec& payoff, const TransitionSpec& spec, int n_min,
                               int n_max);

struct ObstacleGrid {
  int time_steps = 0;     // stored time levels (excluding t = horizon)
  double horizon = 1.0;
  int substeps = 0;       // generator steps per time level; 0 picks the smallest stable power of two
};

struct ObstacleSolution {
  ValueSurface surface;              // u at the stored time levels
  StoppingRegion region;             // exercise masks at the stored levels
  std::vector<std::vector<bool>> fine_exercise;  // masks at every generator step, index 0 = t0
  std::vector<BoundaryPoint> boundary;
  double dt = 0.0;                   // generator step
  double dx = 0.0;
  int substeps = 0;
  int time_steps = 0;
  double complementarity_residual = 0.0;
  TransitionSpec fine_spec;          // one generator step per period

  double root() const { return surface.root(); }
};

/// Backward sweep u <- max(obstacle, generator_step(u)) on the fine grid.
/// The obstacle is payoff(step, t, x) with `step` the fine generator index.
ObstacleSolution solve_obstacle(const PayoffSpec& payoff, const TransitionSpec& spec,
                                const ObstacleGrid& grid);

struct HittingReport {
  double max_gap = 0.0;
  double tolerance = 0.0;
  bool passed = false;
  int samples = 0;
};

/// Replays E^_t[X_{tau_t}] with tau_t the first fine step in the extracted
/// exercise set, by a worst-case backward sweep with that rule frozen, and
/// compares to u at `samples` seeded (time level, node) pairs. tolerance <= 0
/// uses 5 * (dx + dt).
HittingReport hitting_time_value_check(const ObstacleSolution& solution, const PayoffSpec& payoff,
                                       int samples = 20, std::uint64_t seed = 7,
                                       double tolerance = 0.0);

/// Consistency residual of the continuous obstacle inequality at the stored
/// levels: max over interior nodes and levels [first_level, last_level) of
/// |min(u_k - psi_k, (u_k - u_{k+1}) / Dt - H[u_k])|. last_level < 0 means
/// time_steps.
double obstacle_consistency_residual(const ObstacleSolution& solution, const PayoffSpec& payoff,
                                     int first_level = 0, int last_level = -1);

}  // namespace gstop
