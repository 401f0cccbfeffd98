#include "gstop/refine.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <random>
#include <sstream>

#include "gstop/horizon.hpp"

namespace gstop {

RefinementLadder dyadic_ladder(const PayoffSpec& payoff, const TransitionSpec& spec, int n_min,
                               int n_max) {
  if (n_min < 0 || n_max < n_min) throw ModelError("dyadic ladder needs 0 <= n_min <= n_max");
  if (n_max > 16) throw ModelError("dyadic ladder n_max above the cost cap of 16");
  spec.validate();
  dyadic_substep_spec(spec, n_max);

  std::vector<std::future<LadderLevel>> jobs;
  for (int n = n_min; n <= n_max; ++n) {
    jobs.push_back(std::async(std::launch::async, [&payoff, &spec, n] {
      LadderLevel lvl;
      lvl.level = n;
      lvl.result = snell_sup(payoff, dyadic_substep_spec(spec, n), 1 << n);
      lvl.root_value = lvl.result.surface.root();
      return lvl;
    }));
  }

  RefinementLadder ladder;
  ladder.horizon = spec.period;
  ladder.kernel_steps = spec.substeps;
  for (auto& job : jobs) ladder.levels.push_back(job.get());
  for (std::size_t k = 1; k < ladder.levels.size(); ++k) {
    const double inc = ladder.levels[k].root_value - ladder.levels[k - 1].root_value;
    ladder.increments.push_back(inc);
    ladder.max_violation = std::max(ladder.max_violation, -inc);
  }
  ladder.monotone = ladder.max_violation <= 1e-12;
  return ladder;
}

ObstacleSolution solve_obstacle(const PayoffSpec& payoff, const TransitionSpec& spec,
                                const ObstacleGrid& og) {
  if (og.time_steps < 1) throw ModelError("obstacle grid needs time_steps >= 1");
  if (!(og.horizon > 0.0)) throw ModelError("obstacle horizon must be positive");
  if (og.substeps < 0) throw ModelError("obstacle substeps must be non-negative");

  const double level_dt = og.horizon / og.time_steps;
  TransitionSpec level_spec =
      og.substeps == 0
          ? TransitionSpec::with_stable_substeps(spec.coeffs, spec.band, level_dt, spec.grid)
          : TransitionSpec{spec.coeffs, spec.band, level_dt, og.substeps, spec.grid};
  level_spec.validate();

  ObstacleSolution sol;
  sol.substeps = level_spec.substeps;
  sol.time_steps = og.time_steps;
  sol.dt = level_spec.substep_dt();
  sol.dx = spec.grid.dx;
  sol.fine_spec = TransitionSpec{spec.coeffs, spec.band, sol.dt, 1, spec.grid};

  const Grid& grid = spec.grid;
  const int M = og.time_steps * sol.substeps;
  auto obstacle = [&](int m) { return evaluate_payoff(payoff, grid, m, m * sol.dt); };

  auto& surf = sol.surface;
  surf.grid = grid;
  surf.step_time = level_dt;
  surf.values.resize(static_cast<std::size_t>(og.time_steps) + 1);
  surf.payoff.resize(surf.values.size());
  sol.fine_exercise.assign(static_cast<std::size_t>(M) + 1, std::vector<bool>(grid.size(), true));

  LatticeFunction u = obstacle(M);
  surf.values.back() = u;
  surf.payoff.back() = u;
  for (int m = M - 1; m >= 0; --m) {
    const LatticeFunction psi = obstacle(m);
    const LatticeFunction gen = generator_apply(u, sol.fine_spec);
    LatticeFunction next = generator_step(u, sol.fine_spec);
    auto& mask = sol.fine_exercise[static_cast<std::size_t>(m)];
    for (std::size_t j = 0; j < grid.size(); ++j) {
      next[j] = std::max(psi[j], next[j]);
      mask[j] = in_stopping_set(next[j], psi[j]);
      if (j == 0 || j + 1 == grid.size()) continue;
      const double r = std::min(next[j] - psi[j], (next[j] - u[j]) / sol.dt - gen[j]);
      sol.complementarity_residual = std::max(sol.complementarity_residual, std::abs(r));
    }
    u = std::move(next);
    if (m % sol.substeps == 0) {
      const auto k = static_cast<std::size_t>(m / sol.substeps);
      surf.values[k] = u;
      surf.payoff[k] = psi;
    }
  }

  sol.region = extract_region(surf);
  sol.boundary = exercise_boundary(sol.region, grid, level_dt);
  return sol;
}

HittingReport hitting_time_value_check(const ObstacleSolution& sol, const PayoffSpec& payoff,
                                       int samples, std::uint64_t seed, double tolerance) {
  const Grid& grid = sol.surface.grid;
  const int M = sol.time_steps * sol.substeps;
  auto obstacle = [&](int m) { return evaluate_payoff(payoff, grid, m, m * sol.dt); };

  std::vector<LatticeFunction> replay(static_cast<std::size_t>(sol.time_steps) + 1);
  LatticeFunction w = obstacle(M);
  replay.back() = w;
  for (int m = M - 1; m >= 0; --m) {
    const LatticeFunction psi = obstacle(m);
    LatticeFunction cont = generator_step(w, sol.fine_spec);
    const auto& mask = sol.fine_exercise[static_cast<std::size_t>(m)];
    for (std::size_t j = 0; j < grid.size(); ++j) cont[j] = mask[j] ? psi[j] : cont[j];
    w = std::move(cont);
    if (m % sol.substeps == 0) replay[static_cast<std::size_t>(m / sol.substeps)] = w;
  }

  HittingReport rep;
  rep.tolerance = tolerance > 0.0 ? tolerance : 5.0 * (sol.dx + sol.dt);
  rep.samples = samples;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick_level(0, sol.time_steps);
  std::uniform_int_distribution<std::size_t> pick_node(0, grid.size() - 1);
  for (int s = 0; s < samples; ++s) {
    const auto k = static_cast<std::size_t>(pick_level(rng));
    const std::size_t j = s == 0 ? grid.center() : pick_node(rng);
    const std::size_t kk = s == 0 ? 0 : k;
    rep.max_gap = std::max(rep.max_gap, std::abs(replay[kk][j] - sol.surface.values[kk][j]));
  }
  rep.passed = rep.max_gap <= rep.tolerance;
  return rep;
}

double obstacle_consistency_residual(const ObstacleSolution& sol, const PayoffSpec& payoff,
                                     int first_level, int last_level) {
  const auto& surf = sol.surface;
  const double level_dt = surf.step_time;
  double worst = 0.0;
  const int last = last_level < 0 ? sol.time_steps : std::min(last_level, sol.time_steps);
  for (int k = std::max(first_level, 0); k < last; ++k) {
    const auto uk = static_cast<std::size_t>(k);
    const LatticeFunction& u = surf.values[uk];
    const LatticeFunction psi =
        evaluate_payoff(payoff, surf.grid, k * sol.substeps, k * level_dt);
    const LatticeFunction gen = generator_apply(u, sol.fine_spec);
    for (std::size_t j = 1; j + 1 < u.size(); ++j) {
      const double r = std::min(u[j] - psi[j], (u[j] - surf.values[uk + 1][j]) / level_dt - gen[j]);
      worst = std::max(worst, std::abs(r));
    }
  }
  return worst;
}

}  // namespace gstop
