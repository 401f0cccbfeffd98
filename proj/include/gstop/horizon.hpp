#pragma once

// Infinite-horizon stopping: Wald-Bellman fixed point by monotone value
// iteration, the dyadic superharmonic envelope, and tail diagnostics.

#include <functional>
#include <vector>

#include "gstop/dynamics.hpp"
#include "gstop/snell.hpp"

namespace gstop {

/// discount is the factor beta applied per period. beta = 1 is the
/// undiscounted problem; beta < 1 is an engine extension that makes the
/// iteration a strict contraction.
struct IterationConfig {
  double tol = 1e-10;
  int max_iter = 1000;
  double discount = 1.0;

  void validate() const;
};

struct ValueIteration {
  LatticeFunction F;
  double residual = 0.0;        // ||F - max(f, beta T F)||_inf
  int iterations = 0;
  bool converged = false;
  double min_increment = 0.0;   // most negative nodewise increment seen
};

/// F <- max(f, beta T F) from F = f, stopping when the sup-norm increment
/// drops below tol or max_iter is hit. Starting from f yields the minimal
/// fixed point.
ValueIteration value_iterate(const std::function<double(double)>& f, const TransitionSpec& spec,
                             const IterationConfig& cfg);

/// Same iteration from an arbitrary initial guess (used to expose multiple
/// fixed points).
ValueIteration value_iterate_from(const std::function<double(double)>& f,
                                  const LatticeFunction& initial, const TransitionSpec& spec,
                                  const IterationConfig& cfg);

struct MultiplicityReport {
  ValueIteration from_payoff;
  ValueIteration from_above;
  double gap = 0.0;
  bool multiple = false;  // both converged to fixed points further apart than tol
};

/// Runs the iteration from f and from the constant max(sup f, 0) + 1 and
/// flags distinct fixed points. The engine does not decide which one is the
/// value beyond preferring the minimal one.
MultiplicityReport fixed_point_multiplicity(const std::function<double(double)>& f,
                                            const TransitionSpec& spec,
                                            const IterationConfig& cfg);

inline constexpr int kEnvelopeLevelCap = 10;

/// The period-normalised spec whose period is 2^{-n} of this one; requires
/// substeps divisible by 2^n.
TransitionSpec dyadic_substep_spec(const TransitionSpec& spec, int n);

/// g_0 = g, g_n(x) = sup over t in {k 2^{-n} : 0 <= k <= 4^n} of
/// E^[beta^t g_{n-1}(X_t^x)], with t in periods of spec. Returns g_{n_max}.
/// Requires spec.substeps to be a multiple of 2^{n_max}.
LatticeFunction superharmonic_envelope(const std::function<double(double)>& g,
                                       const TransitionSpec& spec, int n_max,
                                       double discount = 1.0,
                                       std::vector<LatticeFunction>* levels = nullptr);

struct SuperharmonicReport {
  double gap = 0.0;                 // max (beta T F - F)^+
  std::vector<double> power_gaps;   // max (beta^k T^k F - F)^+, k = 1..5
  bool passed = false;
};

SuperharmonicReport superharmonic_check(const LatticeFunction& F, const TransitionSpec& spec,
                                        double discount = 1.0);

/// Stationary region D = {F = f} from a fixed point, as a region without a
/// forced terminal step.
StoppingRegion stationary_region(const LatticeFunction& F, const LatticeFunction& f);

struct TailReport {
  std::vector<int> horizons;
  std::vector<double> root_tail;  // c(tau > N) from the root node
  std::vector<double> max_tail;   // worst over start nodes
  bool decreasing = false;
  bool vanishing = false;         // last root tail below 1e-6
};

/// Worst-case probability that the first hitting time of the region exceeds
/// N: E^[prod_{n <= N} 1{X_n not in D_n}], by one backward sweep per N.
TailReport admissibility_tail(const StoppingRegion& region, const TransitionSpec& spec,
                              const std::vector<int>& horizons);

}  // namespace gstop
