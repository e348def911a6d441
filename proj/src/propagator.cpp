#include "nadlab/propagator.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "nadlab/errors.hpp"

namespace nadlab {

namespace {

// Fourth-order commutator-free Magnus scheme with two exponentials and the
// two-point Gauss-Legendre rule.
const double kSqrt3 = std::sqrt(3.0);
const double kC1 = 0.5 - kSqrt3 / 6.0;
const double kC2 = 0.5 + kSqrt3 / 6.0;
const double kA1 = (3.0 - 2.0 * kSqrt3) / 12.0;
const double kA2 = (3.0 + 2.0 * kSqrt3) / 12.0;

struct Stepper {
  const Generator& generator;
  const GeneratorCheck& check;
  double epsilon;

  Matrix2 eval(double t) const {
    Matrix2 g = generator(t);
    if (check) check(t, g);
    return g;
  }

  Matrix2 step(double t, double h) const {
    const Matrix2 g1 = eval(t + kC1 * h);
    const Matrix2 g2 = eval(t + kC2 * h);
    const double scale = h / epsilon;
    const Matrix2 first = unitary_step(kA2 * g1 + kA1 * g2, scale);
    const Matrix2 second = unitary_step(kA1 * g1 + kA2 * g2, scale);
    return second * first;
  }
};

}  // namespace

double unitarity_defect(const Matrix2& u) {
  return operator_norm(u.adjoint() * u - Matrix2::Identity());
}

void validate(const EvolutionSpec& spec) {
  if (!(spec.epsilon > 0.0) || !(spec.epsilon <= 1.0)) {
    throw Error(ErrorCode::kInvalidParameter, "epsilon must lie in (0, 1]");
  }
  if (!(spec.step_control.tolerance_per_unit_time > 0.0)) {
    throw Error(ErrorCode::kInvalidParameter, "tolerance_per_unit_time must be positive");
  }
  if (!(spec.step_control.initial_step > 0.0)) {
    throw Error(ErrorCode::kInvalidParameter, "initial_step must be positive");
  }
  if (!std::isfinite(spec.t_start) || !std::isfinite(spec.t_end)) {
    throw Error(ErrorCode::kInvalidParameter, "time window must be finite");
  }
}

PropagatorResult evolve(const Generator& generator, const EvolutionSpec& spec, const GeneratorCheck& check) {
  validate(spec);
  PropagatorResult result;
  const double span = spec.t_end - spec.t_start;
  const double dir = span >= 0.0 ? 1.0 : -1.0;

  std::vector<double> samples = spec.sample_times;
  for (double s : samples) {
    if ((s - spec.t_start) * dir < 0.0 || (spec.t_end - s) * dir < 0.0) {
      throw Error(ErrorCode::kInvalidParameter, "sample time outside the integration window");
    }
  }
  std::sort(samples.begin(), samples.end(), [dir](double a, double b) { return a * dir < b * dir; });
  std::size_t next_sample = 0;
  auto record_samples = [&](double t, const Matrix2& u) {
    while (next_sample < samples.size() && samples[next_sample] == t) {
      result.history_times.push_back(t);
      result.history.push_back(u);
      ++next_sample;
    }
  };

  Matrix2 u = Matrix2::Identity();
  double t = spec.t_start;
  record_samples(t, u);
  if (span == 0.0) {
    result.u_matrix = u;
    return result;
  }

  const StepControl& sc = spec.step_control;
  const Stepper stepper{generator, check, spec.epsilon};
  double h = dir * std::min({sc.initial_step, sc.max_step, std::abs(span)});
  double prev_ratio = 1.0;

  while (t != spec.t_end) {
    const double target = next_sample < samples.size() ? samples[next_sample] : spec.t_end;
    double h_try = h;
    bool landing = false;
    if (std::abs(h_try) >= std::abs(target - t)) {
      h_try = target - t;
      landing = true;
    }

    const Matrix2 big = stepper.step(t, h_try);
    const Matrix2 half1 = stepper.step(t, 0.5 * h_try);
    const Matrix2 half2 = stepper.step(t + 0.5 * h_try, 0.5 * h_try);
    const Matrix2 small = half2 * half1;
    // Local error of the order-4 scheme scales as h^5, so the two-half-step
    // result is ~16x more accurate than the single step.
    const double err = operator_norm(big - small) / 15.0;
    const double allowed = sc.tolerance_per_unit_time * std::abs(h_try);
    const double ratio = std::max(err / allowed, 1e-10);

    if (ratio <= 1.0) {
      u = small * u;
      t = landing ? target : t + h_try;
      ++result.accepted_steps;
      record_samples(t, u);
      // Proportional-integral controller on the per-unit-time error.
      double factor = 0.9 * std::pow(ratio, -0.7 / 4.0) * std::pow(prev_ratio, 0.4 / 4.0);
      factor = std::clamp(factor, 0.2, 4.0);
      prev_ratio = ratio;
      const double h_next = (landing ? std::max(std::abs(h), std::abs(h_try)) : std::abs(h_try)) * factor;
      h = dir * std::min(h_next, sc.max_step);
    } else {
      ++result.rejected_steps;
      const double factor = std::clamp(0.9 * std::pow(ratio, -1.0 / 4.0), 0.1, 0.9);
      h = h_try * factor;
    }
    if (std::abs(h) < sc.min_step && t != spec.t_end) {
      std::ostringstream os;
      os << "required step " << std::abs(h) << " below " << sc.min_step << " at t = " << t
         << " (epsilon = " << spec.epsilon << ")";
      throw Error(ErrorCode::kStepUnderflow, os.str());
    }
  }

  result.u_matrix = u;
  result.unitarity_defect = unitarity_defect(u);
  return result;
}

PropagatorResult evolve_u(const HamiltonianFamily& family, const EvolutionSpec& spec) {
  return evolve([&family](double t) { return family.evaluate(t); }, spec);
}

Matrix2 adiabatic_generator(const HamiltonianFamily& family, double epsilon, double t) {
  const PauliSeries h = family.jet(t, 1);
  const Pauli h0 = value(h);
  const Complex w = std::sqrt(h0.cx * h0.cx + h0.cy * h0.cy + h0.cz * h0.cz);
  if (2.0 * std::abs(w) < kDegeneracyThreshold) {
    std::ostringstream os;
    os << "spectral gap collapsed at t = " << t;
    throw Error(ErrorCode::kDegenerateSpectrum, os.str());
  }
  const PauliSeries p = low_projector(h, std::abs(w));
  const Pauli k = value(commutator(derivative(p), p));
  return from_pauli(h0) + Complex{0.0, epsilon} * from_pauli(k);
}

PropagatorResult evolve_v(const HamiltonianFamily& family, const EvolutionSpec& spec) {
  const double eps = spec.epsilon;
  auto check = [](double t, const Matrix2& g) {
    const double scale = std::max(1.0, g.cwiseAbs().maxCoeff());
    if ((g - g.adjoint()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
      std::ostringstream os;
      os << "adiabatic generator not Hermitian at t = " << t;
      throw Error(ErrorCode::kNonHermitianInput, os.str());
    }
  };
  return evolve([&family, eps](double t) { return adiabatic_generator(family, eps, t); }, spec, check);
}

double adiabatic_defect(const HamiltonianFamily& family, const EvolutionSpec& spec, const ProjectorFn& projector) {
  const PropagatorResult r = evolve_u(family, spec);
  const Matrix2 p_start = projector(spec.t_start);
  const Matrix2 p_end = projector(spec.t_end);
  return operator_norm((Matrix2::Identity() - p_end) * r.u_matrix * p_start);
}

double adiabatic_defect(const HamiltonianFamily& family, const EvolutionSpec& spec) {
  return adiabatic_defect(family, spec, [&family](double t) { return family.frame(t).p_low; });
}

}  // namespace nadlab
