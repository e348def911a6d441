#include "nadlab/series.hpp"

#include <algorithm>
#include <cassert>

namespace nadlab {

namespace {

constexpr Complex kI{0.0, 1.0};

int common_degree(const TaylorSeries& a, const TaylorSeries& b) {
  return std::min(a.degree(), b.degree());
}

}  // namespace

TaylorSeries::TaylorSeries(Complex value, int degree) : c_(static_cast<std::size_t>(degree + 1), Complex{0.0}) {
  c_[0] = value;
}

TaylorSeries TaylorSeries::variable(Complex t0, int degree) {
  TaylorSeries s(t0, degree);
  if (degree >= 1) s[1] = 1.0;
  return s;
}

TaylorSeries TaylorSeries::derivative() const {
  TaylorSeries d(0.0, std::max(0, degree() - 1));
  for (int n = 1; n <= degree(); ++n) d[n - 1] = static_cast<double>(n) * c_[static_cast<std::size_t>(n)];
  return d;
}

TaylorSeries TaylorSeries::truncated(int deg) const {
  TaylorSeries t(0.0, deg);
  for (int n = 0; n <= std::min(deg, degree()); ++n) t[n] = (*this)[n];
  return t;
}

TaylorSeries& TaylorSeries::operator+=(const TaylorSeries& o) {
  *this = *this + o;
  return *this;
}

TaylorSeries& TaylorSeries::operator-=(const TaylorSeries& o) {
  *this = *this - o;
  return *this;
}

TaylorSeries& TaylorSeries::operator*=(Complex a) {
  for (auto& x : c_) x *= a;
  return *this;
}

TaylorSeries operator+(const TaylorSeries& a, const TaylorSeries& b) {
  const int d = common_degree(a, b);
  TaylorSeries r(0.0, d);
  for (int n = 0; n <= d; ++n) r[n] = a[n] + b[n];
  return r;
}

TaylorSeries operator-(const TaylorSeries& a, const TaylorSeries& b) {
  const int d = common_degree(a, b);
  TaylorSeries r(0.0, d);
  for (int n = 0; n <= d; ++n) r[n] = a[n] - b[n];
  return r;
}

TaylorSeries operator-(const TaylorSeries& a) { return a * Complex{-1.0}; }

TaylorSeries operator*(const TaylorSeries& a, const TaylorSeries& b) {
  const int d = common_degree(a, b);
  TaylorSeries r(0.0, d);
  for (int n = 0; n <= d; ++n) {
    Complex acc{0.0};
    for (int k = 0; k <= n; ++k) acc += a[k] * b[n - k];
    r[n] = acc;
  }
  return r;
}

TaylorSeries operator/(const TaylorSeries& a, const TaylorSeries& b) { return a * reciprocal(b); }

TaylorSeries operator+(const TaylorSeries& a, Complex b) {
  TaylorSeries r = a;
  r[0] += b;
  return r;
}
TaylorSeries operator+(Complex a, const TaylorSeries& b) { return b + a; }
TaylorSeries operator-(const TaylorSeries& a, Complex b) { return a + (-b); }
TaylorSeries operator-(Complex a, const TaylorSeries& b) { return (-b) + a; }

TaylorSeries operator*(const TaylorSeries& a, Complex b) {
  TaylorSeries r = a;
  r *= b;
  return r;
}
TaylorSeries operator*(Complex a, const TaylorSeries& b) { return b * a; }
TaylorSeries operator/(const TaylorSeries& a, Complex b) { return a * (1.0 / b); }
TaylorSeries operator/(Complex a, const TaylorSeries& b) { return reciprocal(b) * a; }

TaylorSeries reciprocal(const TaylorSeries& x) {
  const int d = x.degree();
  TaylorSeries y(0.0, d);
  y[0] = 1.0 / x[0];
  for (int n = 1; n <= d; ++n) {
    Complex acc{0.0};
    for (int k = 1; k <= n; ++k) acc += x[k] * y[n - k];
    y[n] = -acc * y[0];
  }
  return y;
}

TaylorSeries sqrt_near(const TaylorSeries& x, Complex near) {
  const int d = x.degree();
  TaylorSeries y(0.0, d);
  Complex r = std::sqrt(x[0]);
  if (std::abs(-r - near) < std::abs(r - near)) r = -r;
  y[0] = r;
  for (int n = 1; n <= d; ++n) {
    Complex acc = x[n];
    for (int k = 1; k < n; ++k) acc -= y[k] * y[n - k];
    y[n] = acc / (2.0 * r);
  }
  return y;
}

TaylorSeries sqrt(const TaylorSeries& x) { return sqrt_near(x, std::sqrt(x[0])); }

TaylorSeries exp(const TaylorSeries& x) {
  const int d = x.degree();
  TaylorSeries y(0.0, d);
  y[0] = std::exp(x[0]);
  for (int n = 1; n <= d; ++n) {
    Complex acc{0.0};
    for (int k = 1; k <= n; ++k) acc += static_cast<double>(k) * x[k] * y[n - k];
    y[n] = acc / static_cast<double>(n);
  }
  return y;
}

TaylorSeries tanh(const TaylorSeries& x) {
  // y' = (1 - y^2) x'
  const int d = x.degree();
  TaylorSeries y(0.0, d);
  TaylorSeries one_minus_y2(0.0, d);
  y[0] = std::tanh(x[0]);
  one_minus_y2[0] = 1.0 - y[0] * y[0];
  for (int n = 1; n <= d; ++n) {
    Complex acc{0.0};
    for (int k = 1; k <= n; ++k) acc += static_cast<double>(k) * x[k] * one_minus_y2[n - k];
    y[n] = acc / static_cast<double>(n);
    Complex sq{0.0};
    for (int k = 0; k <= n; ++k) sq += y[k] * y[n - k];
    one_minus_y2[n] = -sq;
  }
  return y;
}

Pauli value(const PauliSeries& p) { return {p.c0.value(), p.cx.value(), p.cy.value(), p.cz.value()}; }

PauliSeries derivative(const PauliSeries& p) {
  return {p.c0.derivative(), p.cx.derivative(), p.cy.derivative(), p.cz.derivative()};
}

PauliSeries operator+(const PauliSeries& a, const PauliSeries& b) {
  return {a.c0 + b.c0, a.cx + b.cx, a.cy + b.cy, a.cz + b.cz};
}

PauliSeries operator-(const PauliSeries& a, const PauliSeries& b) {
  return {a.c0 - b.c0, a.cx - b.cx, a.cy - b.cy, a.cz - b.cz};
}

PauliSeries operator*(Complex a, const PauliSeries& b) { return {a * b.c0, a * b.cx, a * b.cy, a * b.cz}; }

PauliSeries commutator(const PauliSeries& a, const PauliSeries& b) {
  const TaylorSeries x = a.cy * b.cz - a.cz * b.cy;
  const TaylorSeries y = a.cz * b.cx - a.cx * b.cz;
  const TaylorSeries z = a.cx * b.cy - a.cy * b.cx;
  const int d = x.degree();
  return {TaylorSeries(0.0, d), 2.0 * kI * x, 2.0 * kI * y, 2.0 * kI * z};
}

PauliSeries zero_pauli_series(int degree) {
  TaylorSeries z(0.0, degree);
  return {z, z, z, z};
}

PauliSeries low_projector(const PauliSeries& h, Complex root_near) {
  const TaylorSeries w2 = h.cx * h.cx + h.cy * h.cy + h.cz * h.cz;
  const TaylorSeries inv_w = reciprocal(sqrt_near(w2, root_near));
  const int d = w2.degree();
  return {TaylorSeries(0.5, d), -0.5 * (h.cx * inv_w), -0.5 * (h.cy * inv_w), -0.5 * (h.cz * inv_w)};
}

}  // namespace nadlab
