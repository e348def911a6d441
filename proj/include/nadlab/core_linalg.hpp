#pragma once

// 2x2 complex linear algebra shared by every other module: closed-form
// Hermitian eigendecomposition, spectral projectors, commutators and exact
// unitary exponentials.

#include <complex>

#include <Eigen/Dense>

namespace nadlab {

using Complex = std::complex<double>;
using Matrix2 = Eigen::Matrix2cd;
using Vector2 = Eigen::Vector2cd;

inline constexpr double kHermitianTolerance = 1e-14;
inline constexpr double kDegeneracyThreshold = 1e-12;

/// Coefficients of m = c0*I + cx*sx + cy*sy + cz*sz in the Pauli basis.
/// For Hermitian m all four are real; the type is complex so the same
/// representation serves the continued (complex-time) families.
struct Pauli {
  Complex c0{0.0}, cx{0.0}, cy{0.0}, cz{0.0};
};

Pauli to_pauli(const Matrix2& m);
Matrix2 from_pauli(const Pauli& p);

Matrix2 sigma_x();
Matrix2 sigma_y();
Matrix2 sigma_z();

/// Largest singular value.
double operator_norm(const Matrix2& m);

/// Hermitian 2x2 matrix. Construction validates Hermiticity within
/// kHermitianTolerance (scaled by max(1, |entries|)) and throws
/// NonHermitianInput otherwise; the stored value is the exact Hermitian part.
class HermitianMatrix2 {
 public:
  explicit HermitianMatrix2(const Matrix2& m);

  const Matrix2& matrix() const noexcept { return m_; }

 private:
  Matrix2 m_;
};

struct SpectralFrame {
  double e_low = 0.0;
  double e_high = 0.0;
  Matrix2 p_low = Matrix2::Zero();
  Matrix2 p_high = Matrix2::Zero();
  Vector2 v_low = Vector2::Zero();
  Vector2 v_high = Vector2::Zero();
  double gap = 0.0;
  // Set when gap < kDegeneracyThreshold; the projectors are then an
  // arbitrary (but valid) splitting.
  bool degenerate = false;

  Matrix2 reconstruct() const { return e_low * p_low + e_high * p_high; }
};

SpectralFrame eigen_decompose(const HermitianMatrix2& m);

Matrix2 commutator(const Matrix2& a, const Matrix2& b);

/// exp(-i * scale * generator), closed form. The generator may be any 2x2
/// matrix; for Hermitian generators the result is unitary to rounding.
Matrix2 unitary_step(const Matrix2& generator, double scale);

/// Re-phases the eigenvectors of `next` so that their overlaps with the
/// corresponding vectors of `prev` are real and positive (discrete parallel
/// transport). Projectors are unaffected.
SpectralFrame phase_align(const SpectralFrame& prev, const SpectralFrame& next);

/// Riesz projector (1/2 pi i) \oint (z - m)^{-1} dz over the circle
/// |z - center| = radius, evaluated with the periodic trapezoidal rule.
Matrix2 riesz_projector(const Matrix2& m, Complex center, double radius, int nodes = 64);

/// Eigenvalues of a general 2x2 matrix; the first is the one obtained with
/// the principal square root, i.e. c0 - sqrt(cx^2 + cy^2 + cz^2).
std::pair<Complex, Complex> eigenvalues(const Matrix2& m);

}  // namespace nadlab
