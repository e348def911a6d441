#pragma once

// Closed-form and complex-analytic predictions for exponentially small
// transitions, and log-linear fitting of measured amplitudes.

#include <utility>
#include <vector>

#include "nadlab/contour.hpp"
#include "nadlab/hamiltonians.hpp"

namespace nadlab {

/// exp(-pi delta^2 / (4 eps)), the exact Zener scattering amplitude.
double lz_amplitude(double delta, double epsilon);

/// (erf(x) + 1) / 2
double erf_switch(double x);

/// Upper-half-plane zero of rho, by Newton iteration on rho^2 (analytic with
/// a simple zero where rho itself has a square-root branch point).
Complex find_complex_zero(const GapFunction& gap, int max_iterations = 100);

struct DecayRatePrediction {
  double gamma = 0.0;
  Complex z0;
  double contour_radius = 0.0;
  double quadrature_error_estimate = 0.0;
  Complex loop_integral;
};

/// gamma = |Im of the loop integral of rho| / 2, the loop based at the origin
/// and circling z0 once at radius min(contour_radius, Im z0 / 2).
DecayRatePrediction decay_rate(const GapFunction& gap, double contour_radius = 0.5);

/// Natural time t(s) = integral of rho from 0 to s along the straight
/// segment, with rho continued from its positive value at the origin. The
/// substitution z = s (1 - w^2) keeps the rule spectrally accurate even when
/// s is a square-root branch point of rho.
Complex natural_time(const HamiltonianFamily& family, Complex s);

struct ExponentialFit {
  double G = 0.0;
  double gamma = 0.0;
  double r_squared = 0.0;
  std::vector<double> epsilons_used;
  /// r_squared >= 0.999
  bool accepted = false;
};

struct ExponentialFitOptions {
  /// Amplitudes below this are outside the propagator's accuracy budget.
  double amplitude_floor = 1e-10;
  /// Drop the largest epsilon (once) when the fit is not accepted and more
  /// than four points remain.
  bool discard_largest_on_drift = true;
};

/// Least squares of ln A = ln G - gamma / eps, weights optional (default 1).
ExponentialFit fit_exponential(const std::vector<std::pair<double, double>>& measurements,
                               const ExponentialFitOptions& options = {}, const std::vector<double>& weights = {});

}  // namespace nadlab
