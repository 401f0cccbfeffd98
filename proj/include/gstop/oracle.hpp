#pragma once

// Ground truth for tiny instances: exhaustive enumeration of stopping rules and
// endpoint volatility policies, classical (linear) comparators and randomized
// supermartingale dominators.

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "gstop/dynamics.hpp"
#include "gstop/gkernel.hpp"
#include "gstop/snell.hpp"

namespace gstop::oracle {

class BudgetExceeded : public ModelError {
 public:
  BudgetExceeded(const std::string& what, double estimate);
  double estimate;
};

inline constexpr double kRuleBudget = 1e7;
inline constexpr double kPairBudget = 1e8;

/// (step, node) pairs reachable from the root before the terminal step, in
/// lexicographic order. Rules and policies are indexed by this list.
struct ReachableSet {
  struct Site {
    int step;
    std::size_t node;
  };
  std::vector<Site> sites;
  std::vector<std::vector<int>> index;  // index[step][node] -> site, or -1
};

ReachableSet reachable_sites(const LatticeModel& model, int horizon);

/// Stop/continue per reachable site; stopping at the terminal step is implied.
struct StoppingRule {
  std::vector<bool> stop;
};

/// Volatility rate per reachable site, each one of the band endpoints.
struct ScenarioPolicy {
  std::vector<double> rate;
};

struct Certificate {
  double value = 0.0;
  StoppingRule rule;
  ScenarioPolicy policy;
  ReachableSet sites;
  std::uint64_t rules_enumerated = 0;
};

/// Linear expectation of X_tau at the root under one rule and one policy.
double evaluate_linear(const PayoffSpec& payoff, const LatticeModel& model, int horizon,
                       const ReachableSet& sites, const StoppingRule& rule,
                       const ScenarioPolicy& policy);

/// max over policies of E^P[X_tau] for one rule; optionally returns the policy.
double evaluate_rule(const PayoffSpec& payoff, const LatticeModel& model, int horizon,
                     const ReachableSet& sites, const StoppingRule& rule,
                     ScenarioPolicy* argmax = nullptr);

/// max over all rules of max over all policies. Rules are enumerated
/// explicitly; for each rule the policy maximum is taken site by site, which
/// is exact because each site's objective is affine in its own rate. Ties keep
/// the rule with the smallest bitmask (site 0 least significant).
Certificate enumerate_sup(const PayoffSpec& payoff, const LatticeModel& model, int horizon);

/// min over rules of max over policies.
Certificate enumerate_infsup(const PayoffSpec& payoff, const LatticeModel& model, int horizon);

enum class LoopOrder { rules_outer, policies_outer };

/// Fully literal double enumeration (rules x policies) with both loops
/// explicit, for cross-checking on small instances. `minimize_rules` gives
/// the inf-sup game value and requires rules_outer.
double enumerate_pairs(const PayoffSpec& payoff, const LatticeModel& model, int horizon,
                       LoopOrder order, bool minimize_rules = false);

/// Standard linear backward induction V_n = max(X_n, E[V_{n+1}]) on a
/// degenerate band.
std::vector<LatticeFunction> classical_snell(const PayoffSpec& payoff, const LatticeModel& model,
                                             int horizon);

/// Same on G-SDE dynamics with a degenerate band, using a linear upwind
/// scheme written independently of the nonlinear generator.
std::vector<LatticeFunction> classical_snell(const PayoffSpec& payoff, const TransitionSpec& spec,
                                             int horizon);

/// Cox-Ross-Rubinstein binomial American put.
double crr_american_put(double s0, double strike, double sigma, double rate, double maturity,
                        int steps);

/// Theta-scheme (Rannacher-started Crank-Nicolson) finite differences with
/// PSOR for the American put on the uniform grid x0 + i dx, Dirichlet data at
/// both ends. Returns the value at every node at time 0.
LatticeFunction fd_american_put(const Grid& grid, double strike, double sigma, double rate,
                                double maturity, int time_steps);

/// U_N = X_N + e_N, U_n = max(X_n, E^_n[U_{n+1}]) + e_n with e uniform on
/// [0, scale], seeded. scale = 0 reproduces the Snell envelope.
std::vector<LatticeFunction> random_dominator(const PayoffSpec& payoff, const Kernel& kernel,
                                              int horizon, std::uint64_t seed, double scale = 0.1);

/// Stationary superharmonic dominator of f: min(F + c, G) where G iterates
/// max(f + e, beta T G) to a fixed point from f + e. F is the caller's value
/// function estimate.
LatticeFunction random_superharmonic_dominator(const std::function<double(double)>& f,
                                               const TransitionSpec& spec, double discount,
                                               const LatticeFunction& F, std::uint64_t seed);

nlohmann::json to_json(const Certificate& c);
Certificate certificate_from_json(const nlohmann::json& j);

}  // namespace gstop::oracle
