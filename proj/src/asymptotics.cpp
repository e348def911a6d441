#include "nadlab/asymptotics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "nadlab/errors.hpp"

namespace nadlab {

double lz_amplitude(double delta, double epsilon) {
  if (!(epsilon > 0.0) || !(delta >= 0.0)) throw Error(ErrorCode::kInvalidParameter, "need epsilon > 0, delta >= 0");
  return std::exp(-std::numbers::pi * delta * delta / (4.0 * epsilon));
}

double erf_switch(double x) { return 0.5 * (std::erf(x) + 1.0); }

Complex find_complex_zero(const GapFunction& gap, int max_iterations) {
  if (!gap.zero_guess) throw Error(ErrorCode::kInvalidParameter, "gap function declares no zero");
  Complex z = *gap.zero_guess;
  if (!(z.imag() > 0.0)) throw Error(ErrorCode::kInvalidParameter, "zero guess must lie in the upper half plane");
  const auto& f = gap.rho_squared;
  for (int it = 0; it < max_iterations; ++it) {
    const Complex fz = f(z);
    if (std::abs(fz) < 1e-24) break;
    // rho^2 is analytic, so a central difference along the real direction is
    // its complex derivative.
    const double h = 1e-5 * std::max(1.0, std::abs(z));
    const Complex df = (f(z + h) - f(z - h)) / (2.0 * h);
    if (df == Complex{}) break;
    const Complex step = fz / df;
    z -= step;
    if (std::abs(step) <= 4e-16 * std::max(1.0, std::abs(z))) {
      if (std::abs(z.imag()) < 1e-8) break;
      if (z.imag() < 0.0) z = std::conj(z);
      return z;
    }
    if (it == max_iterations - 1) {
      std::ostringstream os;
      os << "Newton on rho^2 did not converge from " << *gap.zero_guess << " (last " << z << ")";
      throw Error(ErrorCode::kNoConvergence, os.str());
    }
  }
  if (std::abs(z.imag()) < 1e-8) {
    std::ostringstream os;
    os << "zero of rho at " << z << " lies on the real axis";
    throw Error(ErrorCode::kZeroOnRealAxis, os.str());
  }
  if (z.imag() < 0.0) z = std::conj(z);
  return z;
}

DecayRatePrediction decay_rate(const GapFunction& gap, double contour_radius) {
  DecayRatePrediction out;
  out.z0 = find_complex_zero(gap);
  out.contour_radius = std::min(contour_radius, 0.5 * out.z0.imag());
  const ContourPath path = loop_around(out.z0, out.contour_radius);
  const auto rho2 = gap.rho_squared;
  const ContourResult r =
      integrate(path, [rho2] { return sqrt_continuation(rho2, Complex{1.0, 0.0}); });
  out.loop_integral = r.value;
  out.gamma = 0.5 * std::abs(r.value.imag());
  out.quadrature_error_estimate = r.error_estimate;
  return out;
}

Complex natural_time(const HamiltonianFamily& family, Complex s) {
  if (s == Complex{}) return {};
  const GapFunction gap = family.gap_function();
  const auto rho2 = gap.rho_squared;
  // z(w) = s (1 - w^2), w: 1 -> 0 walks 0 -> s; integrand rho(z) * dz/dw.
  ContourPath path;
  path.segment(Complex{1.0, 0.0}, Complex{0.0, 0.0});
  auto factory = [rho2, s] {
    auto rho = sqrt_continuation([rho2, s](Complex w) { return rho2(s * (1.0 - w * w)); }, Complex{1.0, 0.0});
    return Continuation([rho, s](Complex w) { return rho(w) * (-2.0 * s * w); });
  };
  return integrate(path, factory).value;
}

ExponentialFit fit_exponential(const std::vector<std::pair<double, double>>& measurements,
                               const ExponentialFitOptions& options, const std::vector<double>& weights) {
  if (!weights.empty() && weights.size() != measurements.size()) {
    throw Error(ErrorCode::kInvalidParameter, "weights must match the measurements");
  }
  struct Point {
    double eps, amp, w;
  };
  std::vector<Point> pts;
  for (std::size_t i = 0; i < measurements.size(); ++i) {
    const auto [eps, amp] = measurements[i];
    if (!(amp > 0.0)) {
      std::ostringstream os;
      os << "amplitude " << amp << " at epsilon " << eps << " is not positive";
      throw Error(ErrorCode::kNonPositiveAmplitude, os.str());
    }
    if (!(eps > 0.0)) throw Error(ErrorCode::kInvalidParameter, "epsilon must be positive");
    if (amp < options.amplitude_floor) continue;
    pts.push_back({eps, amp, weights.empty() ? 1.0 : weights[i]});
  }

  auto solve = [](const std::vector<Point>& p) {
    if (p.size() < 4) throw Error(ErrorCode::kInsufficientData, "exponential fit needs >= 4 points above the floor");
    double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (const Point& q : p) {
      const double x = 1.0 / q.eps, y = std::log(q.amp);
      sw += q.w;
      sx += q.w * x;
      sy += q.w * y;
      sxx += q.w * x * x;
      sxy += q.w * x * y;
    }
    const double det = sw * sxx - sx * sx;
    const double slope = (sw * sxy - sx * sy) / det;
    const double intercept = (sy - slope * sx) / sw;
    const double ybar = sy / sw;
    double ss_res = 0, ss_tot = 0;
    for (const Point& q : p) {
      const double x = 1.0 / q.eps, y = std::log(q.amp);
      ss_res += q.w * std::pow(y - (intercept + slope * x), 2);
      ss_tot += q.w * std::pow(y - ybar, 2);
    }
    ExponentialFit fit;
    fit.gamma = -slope;
    fit.G = std::exp(intercept);
    fit.r_squared = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
    fit.accepted = fit.r_squared >= 0.999 && fit.gamma > 0.0;
    for (const Point& q : p) fit.epsilons_used.push_back(q.eps);
    return fit;
  };

  ExponentialFit fit = solve(pts);
  if (!fit.accepted && options.discard_largest_on_drift && pts.size() > 4) {
    auto largest = std::max_element(pts.begin(), pts.end(), [](const Point& a, const Point& b) { return a.eps < b.eps; });
    pts.erase(largest);
    fit = solve(pts);
  }
  return fit;
}

}  // namespace nadlab
