#pragma once

// One-step sublinear conditional expectation on a recombining trinomial
// lattice, the G function, and maximal-distribution expectations.

#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gstop {

class ModelError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Interval [sigma2_min, sigma2_max] of admissible quadratic-variation rates.
struct VolatilityBand {
  double sigma2_min = 1.0;
  double sigma2_max = 1.0;

  /// Throws ModelError unless 0 < sigma2_min <= sigma2_max.
  static VolatilityBand make(double sigma2_min, double sigma2_max);

  bool degenerate() const { return sigma2_min == sigma2_max; }
  bool contains(const VolatilityBand& other) const {
    return sigma2_min <= other.sigma2_min && other.sigma2_max <= sigma2_max;
  }
  void validate() const;
};

enum class Boundary { reflecting, absorbing };

const char* to_string(Boundary b);
Boundary boundary_from_string(const std::string& s);

/// Spatial grid x0 + i*dx for i in [-half_width, half_width], shared by all
/// time steps.
struct Grid {
  double x0 = 0.0;
  double dx = 1.0;
  int half_width = 0;
  Boundary boundary = Boundary::reflecting;

  std::size_t size() const { return static_cast<std::size_t>(2 * half_width + 1); }
  std::size_t center() const { return static_cast<std::size_t>(half_width); }
  double state(std::size_t index) const {
    return x0 + (static_cast<double>(index) - half_width) * dx;
  }
  std::vector<double> states() const;
  void validate() const;
};

/// Values of a random variable measurable with respect to the lattice state at
/// one time step.
class LatticeFunction {
 public:
  LatticeFunction() = default;
  explicit LatticeFunction(std::vector<double> values) : values_(std::move(values)) {}
  LatticeFunction(std::size_t n, double c) : values_(n, c) {}

  static LatticeFunction sample(const Grid& grid, const std::function<double(double)>& f);

  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }
  std::span<const double> values() const { return values_; }
  std::vector<double>& data() { return values_; }
  auto begin() const { return values_.begin(); }
  auto end() const { return values_.end(); }

  bool finite() const;
  double max() const;
  double min() const;

  friend bool operator==(const LatticeFunction&, const LatticeFunction&) = default;

 private:
  std::vector<double> values_;
};

LatticeFunction operator-(const LatticeFunction& f);
LatticeFunction operator+(const LatticeFunction& f, const LatticeFunction& g);
LatticeFunction operator-(const LatticeFunction& f, const LatticeFunction& g);
LatticeFunction operator*(double s, const LatticeFunction& f);
LatticeFunction pointwise_max(const LatticeFunction& f, const LatticeFunction& g);
LatticeFunction pointwise_min(const LatticeFunction& f, const LatticeFunction& g);
double sup_norm(const LatticeFunction& f);
double sup_distance(const LatticeFunction& f, const LatticeFunction& g);

/// Pure G-diffusion lattice: every step moves by a trinomial stencil whose
/// variance v*dt is chosen per node inside the band.
struct LatticeModel {
  Grid grid;
  double dt = 1.0;
  int n_steps = 0;
  VolatilityBand band;

  /// Rejects non-positive dt/dx, invalid band and dx^2 < sigma2_max*dt.
  void validate() const;
  double time(int step) const { return step * dt; }
};

/// Per-node record of the rate that attained a one-step extremum.
struct StepKernelChoice {
  std::vector<double> rate;
  std::vector<double> p_up;
  std::vector<double> p_mid;
  std::vector<double> p_down;
};

struct StepResult {
  LatticeFunction value;
  StepKernelChoice choice;
};

/// G(a) = (sigma2_max * a^+ - sigma2_min * a^-) / 2.
double g_function(double a, const VolatilityBand& band);

/// Neighbour values seen by the stencil at node j under the boundary policy.
/// Reflecting: the ghost node beyond an edge mirrors the interior neighbour.
struct Neighbours {
  double down;
  double mid;
  double up;
};
Neighbours neighbours(std::span<const double> f, std::size_t j);

/// Per-node max over v in {sigma2_min, sigma2_max} of the trinomial average.
/// Ties resolve to sigma2_max.
StepResult step_sup(const LatticeFunction& f, const LatticeModel& model);

/// Per-node min over the band endpoints. Ties resolve to sigma2_min.
StepResult step_inf(const LatticeFunction& f, const LatticeModel& model);

/// Scalar test function with optional interior points the sampler must visit
/// (e.g. the midpoint of an indicator's support).
struct ScalarFunction {
  std::function<double(double)> f;
  std::vector<double> hints;
};

inline constexpr int kMaximalExpectationSamples = 10000;

/// Sublinear expectation of phi(<B>_t): sup of phi over
/// [sigma2_min*t, sigma2_max*t], by uniform sampling plus endpoints plus any
/// hints that fall inside the interval.
double maximal_expectation(const ScalarFunction& phi, const VolatilityBand& band, double t,
                           int samples = kMaximalExpectationSamples);

}  // namespace gstop
