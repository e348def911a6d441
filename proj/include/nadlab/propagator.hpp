#pragma once

// Integration of i eps dU/dt = G(t) U for 2x2 generators with a fourth-order
// commutator-free Magnus scheme. Each step is a product of two exact
// exponentials, so unitarity holds structurally; the defect is monitored and
// reported, never renormalised away.

#include <functional>
#include <vector>

#include "nadlab/core_linalg.hpp"
#include "nadlab/hamiltonians.hpp"

namespace nadlab {

struct StepControl {
  double initial_step = 1e-2;
  double tolerance_per_unit_time = 1e-10;
  double min_step = 1e-12;
  double max_step = 0.5;
};

enum class BasisKind { kFixed, kInstantaneous, kSuperadiabatic };

struct BasisChoice {
  BasisKind kind = BasisKind::kFixed;
  int q = 0;  // superadiabatic level
};

struct EvolutionSpec {
  double epsilon = 0.1;
  double t_start = 0.0;
  double t_end = 0.0;
  StepControl step_control;
  BasisChoice basis_out;
  /// Times (between t_start and t_end, in the direction of integration) at
  /// which U(t, t_start) is recorded; the integrator lands on them exactly.
  std::vector<double> sample_times;
};

struct PropagatorResult {
  Matrix2 u_matrix = Matrix2::Identity();
  double unitarity_defect = 0.0;
  long accepted_steps = 0;
  long rejected_steps = 0;
  std::vector<double> history_times;
  std::vector<Matrix2> history;
};

/// Generator G(t) of i eps dU/dt = G(t) U.
using Generator = std::function<Matrix2(double)>;
/// Optional per-evaluation check (e.g. Hermiticity of a composite generator).
using GeneratorCheck = std::function<void(double, const Matrix2&)>;

void validate(const EvolutionSpec& spec);

PropagatorResult evolve(const Generator& generator, const EvolutionSpec& spec,
                        const GeneratorCheck& check = {});

/// U_eps(t_end, t_start) for the family's Hamiltonian.
PropagatorResult evolve_u(const HamiltonianFamily& family, const EvolutionSpec& spec);

/// Kato's adiabatic evolution V, generated by H + i eps [dP/dt, P] with P the
/// spectral projector onto the lower level. It intertwines P(t_start) and
/// P(t_end). The generator's Hermiticity is asserted at every evaluation.
PropagatorResult evolve_v(const HamiltonianFamily& family, const EvolutionSpec& spec);

/// The adiabatic generator H + i eps [dP/dt, P] at t.
Matrix2 adiabatic_generator(const HamiltonianFamily& family, double epsilon, double t);

using ProjectorFn = std::function<Matrix2(double)>;

/// || (I - Pi(t_end)) U Pi(t_start) || for the supplied projector family.
double adiabatic_defect(const HamiltonianFamily& family, const EvolutionSpec& spec,
                        const ProjectorFn& projector);

/// Same with the instantaneous spectral projector of H.
double adiabatic_defect(const HamiltonianFamily& family, const EvolutionSpec& spec);

double unitarity_defect(const Matrix2& u);

}  // namespace nadlab
