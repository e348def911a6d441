#pragma once

// Superadiabatic projector hierarchy:
//   H_0 = H,  P_q = spectral projector of H_q continued from P_0,
//   K_q = [dP_q/dt, P_q],  H_{q+1} = H - i eps K_q,
// the associated intertwining evolutions V_q (generator H_q + i eps K_q),
// optimal truncation, and transition histories in the resulting bases.

#include <vector>

#include "nadlab/core_linalg.hpp"
#include "nadlab/hamiltonians.hpp"
#include "nadlab/propagator.hpp"

namespace nadlab {

inline constexpr int kDefaultQMax = 12;

/// All hierarchy levels at a single time. Derivatives are exact (Taylor
/// arithmetic on the family's jet), so no grid is involved.
struct HierarchyPoint {
  std::vector<Matrix2> p;  // P_q(t)
  std::vector<Matrix2> k;  // K_q(t)
  std::vector<Matrix2> h;  // H_q(t)
  std::vector<double> gap;  // eigenvalue separation of H_q(t)
};

/// Throws GapClosureError(q) if H_q loses half of the spectral gap of H.
HierarchyPoint hierarchy_at(const HamiltonianFamily& family, double epsilon, double t, int q_max);

Matrix2 superadiabatic_projector(const HamiltonianFamily& family, double epsilon, double t, int q);

/// Generator H_q + i eps K_q of V_q; Hermitian because K_q is anti-Hermitian.
Matrix2 superadiabatic_generator(const HamiltonianFamily& family, double epsilon, double t, int q);

PropagatorResult evolve_vq(const HamiltonianFamily& family, const EvolutionSpec& spec, int q);

enum class Differentiation {
  kTaylor,             // exact jets (default)
  kCentralRichardson,  // central differences + one Richardson level on the grid
};

struct HierarchyOptions {
  Differentiation differentiation = Differentiation::kTaylor;
  /// Keep the levels built before a GapClosure instead of throwing.
  bool truncate_on_gap_closure = false;
  /// Richardson error-estimate gate for kCentralRichardson.
  double max_differentiation_error = 1e-8;
  /// Worker threads across grid points (Taylor route).
  unsigned threads = 1;
};

struct HierarchyLevel {
  // Grid indices [first, last] on which this level is defined. The Taylor
  // route fills the whole grid; the finite-difference route loses stencil
  // width at each level.
  std::size_t first = 0;
  std::size_t last = 0;
  std::vector<Matrix2> p;
  std::vector<Matrix2> k;
  std::vector<Matrix2> h;
};

struct ProjectorHierarchy {
  double epsilon = 0.0;
  std::vector<double> grid;
  std::vector<HierarchyLevel> levels;
  /// beta_q = sup_t ||K_q - K_{q-1}|| / eps^(q+1), K_{-1} = 0.
  std::vector<double> beta_estimates;
  /// beta_q eps^(q+1), the measured error proxy.
  std::vector<double> error_proxy;
  /// sup_t ||P_q - P_0||.
  std::vector<double> p_deviation;
  int q_star = 0;
  bool q_star_on_boundary = false;
  /// Level at which GapClosure truncated the build, or -1.
  int gap_closure_level = -1;
  double min_gap = 0.0;
  /// The g/eps rule of thumb, with g the minimal gap on the grid.
  double heuristic_q = 0.0;
  /// Largest Richardson error estimate (finite-difference route only).
  double differentiation_error = 0.0;

  int q_max() const { return static_cast<int>(levels.size()) - 1; }
};

ProjectorHierarchy build_hierarchy(const HamiltonianFamily& family, double epsilon, const std::vector<double>& t_grid,
                                   int q_max = kDefaultQMax, const HierarchyOptions& options = {});

struct OptimalLevel {
  int q = 0;
  bool on_boundary = false;  // no interior minimum; q = q_max
  double heuristic = 0.0;    // g / eps
};

OptimalLevel optimal_q(const ProjectorHierarchy& hierarchy);

/// adiabatic_defect in the basis of the given choice (instantaneous or
/// superadiabatic level q; kFixed uses the instantaneous projector at t_start
/// for both ends).
double adiabatic_defect(const HamiltonianFamily& family, const EvolutionSpec& spec, const BasisChoice& basis);

struct TransitionHistory {
  std::vector<double> times;
  std::vector<double> coefficients;  // |c_2(t_i)|
  BasisChoice basis;
  PropagatorResult propagation;
};

/// Starts in the range of P_q(t_start) (the lower level) and records the
/// modulus of the component on the complementary superadiabatic state. q = 0
/// is the instantaneous eigenbasis. `times` must start at t_start.
TransitionHistory transition_history(const HamiltonianFamily& family, double epsilon, const std::vector<double>& times,
                                     int q, const StepControl& control = {});

struct ErfFit {
  double amplitude = 0.0;
  double center = 0.0;
  double width = 0.0;
  /// sup |data - model| / amplitude
  double max_residual = 0.0;
  int iterations = 0;
};

/// History sampled on the hierarchy's own grid.
TransitionHistory transition_history(const HamiltonianFamily& family, const ProjectorHierarchy& hierarchy, int q,
                                     const StepControl& control = {});

/// Least-squares fit of A (erf((t - c)/w) + 1)/2. The initial guess uses the
/// natural-time prediction w = sqrt(2 delta eps) centred at the half-rise
/// time. Throws FitDiverged when the normalised residual exceeds 0.5.
ErfFit erf_profile_fit(const TransitionHistory& history, double delta, double epsilon);
ErfFit erf_profile_fit(const std::vector<double>& times, const std::vector<double>& values, double delta,
                       double epsilon);

/// Unit vector spanning the range of a rank-one projector.
Vector2 range_vector(const Matrix2& projector);

}  // namespace nadlab
