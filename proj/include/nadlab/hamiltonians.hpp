#pragma once

// Analytic two-level Hamiltonian families H(z) = c0 + c.sigma. Each family
// can be evaluated at complex arguments and expanded in a Taylor series at
// real points, and declares the analyticity/decay metadata that the
// asymptotics module relies on.

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>

#include "nadlab/core_linalg.hpp"
#include "nadlab/series.hpp"

namespace nadlab {

/// Analytic gap function rho(z), with rho^2 = X^2 + Y^2 + Z^2 for
/// H = (1/2)[[Z, X + iY], [X - iY, -Z]] (so the eigenvalue gap is rho).
struct GapFunction {
  std::function<Complex(Complex)> rho_squared;
  /// Principal-branch rho; continuous on the real axis.
  std::function<Complex(Complex)> rho;
  /// Seed for the complex zero search (absent when rho has no zeros).
  std::optional<Complex> zero_guess;
};

struct AsymptoticLimits {
  Matrix2 minus_infinity;
  Matrix2 plus_infinity;
};

class HamiltonianFamily {
 public:
  virtual ~HamiltonianFamily() = default;

  virtual std::string name() const = 0;
  virtual Pauli pauli(Complex z) const = 0;
  /// Taylor expansion of H(t0 + s) in s up to the given degree.
  virtual PauliSeries jet(double t0, int degree) const = 0;

  virtual double delta() const = 0;
  /// Half-width of the analyticity strip around the real axis.
  virtual double strip_mu() const = 0;
  /// Exponent of the algebraic approach to the limits (absent if none).
  virtual std::optional<double> decay_nu() const = 0;
  virtual std::optional<AsymptoticLimits> limits() const = 0;
  virtual std::optional<Complex> zero_guess() const = 0;

  Matrix2 evaluate(Complex z) const { return from_pauli(pauli(z)); }
  HermitianMatrix2 evaluate_real(double t) const { return HermitianMatrix2(evaluate(t)); }
  SpectralFrame frame(double t) const { return eigen_decompose(evaluate_real(t)); }
  double gap(double t) const { return frame(t).gap; }
  /// The returned closures refer to this family, which must outlive them.
  GapFunction gap_function() const;
};

using FamilyPtr = std::shared_ptr<const HamiltonianFamily>;

/// (1/2)[[t, delta], [delta, -t]]
FamilyPtr zener(double delta);
/// (1/(2 sqrt(t^2 + delta^2))) [[delta, t], [t, -delta]]; eigenvalues +-1/2.
FamilyPtr constant_gap(double delta);
/// (1/2)[[tanh x, delta], [delta, -tanh x]], 0 < delta < 1.
FamilyPtr tanh_model(double delta);
/// tanh_model with the off-diagonal coupling switched off (delta = 0); the
/// levels cross and the channels decouple exactly.
FamilyPtr decoupled_tanh();
/// Time-independent family.
FamilyPtr constant_family(const Matrix2& h);
/// x -> -x reflection of another family.
FamilyPtr mirrored(FamilyPtr base);

/// dH/dt at real t, from the degree-1 Taylor expansion (exact to rounding).
Matrix2 derivative(const HamiltonianFamily& family, double t, int order = 1);

}  // namespace nadlab
