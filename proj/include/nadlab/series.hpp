#pragma once

// Truncated Taylor series in a real shift s around an expansion point, with
// complex coefficients. The families and the superadiabatic hierarchy are
// written once as templates over the scalar type, so evaluating them on a
// TaylorSeries yields exact derivatives to all orders needed by the nested
// [dP/dt, P] construction.

#include <complex>
#include <vector>

#include "nadlab/core_linalg.hpp"

namespace nadlab {

class TaylorSeries {
 public:
  TaylorSeries() = default;
  /// Constant series of the given degree.
  TaylorSeries(Complex value, int degree);
  /// The independent variable t0 + s.
  static TaylorSeries variable(Complex t0, int degree);

  int degree() const noexcept { return static_cast<int>(c_.size()) - 1; }
  Complex operator[](int n) const { return c_[static_cast<std::size_t>(n)]; }
  Complex& operator[](int n) { return c_[static_cast<std::size_t>(n)]; }
  Complex value() const { return c_.front(); }

  /// d/ds; the result has degree one less.
  TaylorSeries derivative() const;
  TaylorSeries truncated(int degree) const;

  TaylorSeries& operator+=(const TaylorSeries& o);
  TaylorSeries& operator-=(const TaylorSeries& o);
  TaylorSeries& operator*=(Complex a);

 private:
  std::vector<Complex> c_;
};

TaylorSeries operator+(const TaylorSeries& a, const TaylorSeries& b);
TaylorSeries operator-(const TaylorSeries& a, const TaylorSeries& b);
TaylorSeries operator-(const TaylorSeries& a);
TaylorSeries operator*(const TaylorSeries& a, const TaylorSeries& b);
TaylorSeries operator/(const TaylorSeries& a, const TaylorSeries& b);
TaylorSeries operator+(const TaylorSeries& a, Complex b);
TaylorSeries operator+(Complex a, const TaylorSeries& b);
TaylorSeries operator-(const TaylorSeries& a, Complex b);
TaylorSeries operator-(Complex a, const TaylorSeries& b);
TaylorSeries operator*(const TaylorSeries& a, Complex b);
TaylorSeries operator*(Complex a, const TaylorSeries& b);
TaylorSeries operator/(const TaylorSeries& a, Complex b);
TaylorSeries operator/(Complex a, const TaylorSeries& b);

TaylorSeries reciprocal(const TaylorSeries& x);
/// Square root whose constant term is the principal root of x[0].
TaylorSeries sqrt(const TaylorSeries& x);
/// Square root whose constant term is the root of x[0] closest to `near`.
TaylorSeries sqrt_near(const TaylorSeries& x, Complex near);
TaylorSeries exp(const TaylorSeries& x);
TaylorSeries tanh(const TaylorSeries& x);

/// 2x2 matrix-valued series in the Pauli basis.
template <class T>
struct PauliT {
  T c0, cx, cy, cz;
};

using PauliSeries = PauliT<TaylorSeries>;

Pauli value(const PauliSeries& p);
PauliSeries derivative(const PauliSeries& p);
PauliSeries operator+(const PauliSeries& a, const PauliSeries& b);
PauliSeries operator-(const PauliSeries& a, const PauliSeries& b);
PauliSeries operator*(Complex a, const PauliSeries& b);
/// [a, b] = 2i (a x b).sigma
PauliSeries commutator(const PauliSeries& a, const PauliSeries& b);
PauliSeries zero_pauli_series(int degree);

/// Spectral projector onto the eigenvalue c0 - sqrt(c.c) of a (possibly
/// non-Hermitian) 2x2 series, P = (I - c.sigma / sqrt(c.c)) / 2, with the
/// square-root branch at the expansion point chosen closest to `root_near`.
/// This is the closed form of the Riesz projector for the tracked branch.
PauliSeries low_projector(const PauliSeries& h, Complex root_near);

}  // namespace nadlab
