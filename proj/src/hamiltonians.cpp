#include "nadlab/hamiltonians.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "nadlab/errors.hpp"

namespace nadlab {

namespace {

Complex constant_like(const Complex&, Complex c) { return c; }
TaylorSeries constant_like(const TaylorSeries& z, Complex c) { return TaylorSeries(c, z.degree()); }

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::kInvalidParameter, what);
}

// Shared plumbing: the derived class provides components<T>(z) once and gets
// both complex evaluation and Taylor jets.
template <class Derived>
class FamilyImpl : public HamiltonianFamily {
 public:
  Pauli pauli(Complex z) const override {
    const auto p = self().template components<Complex>(z);
    return {p.c0, p.cx, p.cy, p.cz};
  }
  PauliSeries jet(double t0, int degree) const override {
    return self().template components<TaylorSeries>(TaylorSeries::variable(t0, degree));
  }

 private:
  const Derived& self() const { return static_cast<const Derived&>(*this); }
};

class Zener final : public FamilyImpl<Zener> {
 public:
  explicit Zener(double delta) : delta_(delta) {}

  template <class T>
  PauliT<T> components(const T& z) const {
    return {constant_like(z, 0.0), constant_like(z, 0.5 * delta_), constant_like(z, 0.0), 0.5 * z};
  }

  std::string name() const override { return "zener"; }
  double delta() const override { return delta_; }
  double strip_mu() const override { return std::numeric_limits<double>::infinity(); }
  std::optional<double> decay_nu() const override { return std::nullopt; }
  std::optional<AsymptoticLimits> limits() const override { return std::nullopt; }
  std::optional<Complex> zero_guess() const override { return Complex{0.0, delta_}; }

 private:
  double delta_;
};

class ConstantGap final : public FamilyImpl<ConstantGap> {
 public:
  explicit ConstantGap(double delta) : delta_(delta) {}

  template <class T>
  PauliT<T> components(const T& z) const {
    using std::sqrt;
    const T inv = 1.0 / (2.0 * sqrt(z * z + delta_ * delta_));
    return {constant_like(z, 0.0), z * inv, constant_like(z, 0.0), inv * delta_};
  }

  std::string name() const override { return "constant_gap"; }
  double delta() const override { return delta_; }
  // Branch points of H at +-i delta.
  double strip_mu() const override { return 0.5 * delta_; }
  std::optional<double> decay_nu() const override { return 2.0; }
  std::optional<AsymptoticLimits> limits() const override {
    return AsymptoticLimits{-0.5 * sigma_x(), 0.5 * sigma_x()};
  }
  std::optional<Complex> zero_guess() const override { return std::nullopt; }

 private:
  double delta_;
};

class Tanh final : public FamilyImpl<Tanh> {
 public:
  explicit Tanh(double delta) : delta_(delta) {}

  template <class T>
  PauliT<T> components(const T& z) const {
    using std::tanh;
    return {constant_like(z, 0.0), constant_like(z, 0.5 * delta_), constant_like(z, 0.0), 0.5 * tanh(z)};
  }

  std::string name() const override { return delta_ > 0.0 ? "tanh_model" : "decoupled_tanh"; }
  double delta() const override { return delta_; }
  // Poles of tanh at +-i pi/2.
  double strip_mu() const override { return 0.25 * std::numbers::pi; }
  // Exponential approach; any algebraic rate holds, 3 is declared.
  std::optional<double> decay_nu() const override { return 3.0; }
  std::optional<AsymptoticLimits> limits() const override {
    Matrix2 minus, plus;
    minus << -0.5, 0.5 * delta_, 0.5 * delta_, 0.5;
    plus << 0.5, 0.5 * delta_, 0.5 * delta_, -0.5;
    return AsymptoticLimits{minus, plus};
  }
  std::optional<Complex> zero_guess() const override { return Complex{0.0, delta_}; }

 private:
  double delta_;
};

class Constant final : public HamiltonianFamily {
 public:
  explicit Constant(const Matrix2& h) : p_(to_pauli(HermitianMatrix2(h).matrix())) {}

  std::string name() const override { return "constant"; }
  Pauli pauli(Complex) const override { return p_; }
  PauliSeries jet(double, int degree) const override {
    return {TaylorSeries(p_.c0, degree), TaylorSeries(p_.cx, degree), TaylorSeries(p_.cy, degree),
            TaylorSeries(p_.cz, degree)};
  }
  double delta() const override { return 2.0 * std::abs(std::sqrt(p_.cx * p_.cx + p_.cy * p_.cy + p_.cz * p_.cz)); }
  double strip_mu() const override { return std::numeric_limits<double>::infinity(); }
  std::optional<double> decay_nu() const override { return std::numeric_limits<double>::infinity(); }
  std::optional<AsymptoticLimits> limits() const override {
    return AsymptoticLimits{from_pauli(p_), from_pauli(p_)};
  }
  std::optional<Complex> zero_guess() const override { return std::nullopt; }

 private:
  Pauli p_;
};

class Mirrored final : public HamiltonianFamily {
 public:
  explicit Mirrored(FamilyPtr base) : base_(std::move(base)) {}

  std::string name() const override { return "mirrored_" + base_->name(); }
  Pauli pauli(Complex z) const override { return base_->pauli(-z); }
  PauliSeries jet(double t0, int degree) const override {
    PauliSeries j = base_->jet(-t0, degree);
    for (TaylorSeries* s : {&j.c0, &j.cx, &j.cy, &j.cz}) {
      for (int n = 1; n <= degree; n += 2) (*s)[n] = -(*s)[n];
    }
    return j;
  }
  double delta() const override { return base_->delta(); }
  double strip_mu() const override { return base_->strip_mu(); }
  std::optional<double> decay_nu() const override { return base_->decay_nu(); }
  std::optional<AsymptoticLimits> limits() const override {
    auto l = base_->limits();
    if (l) std::swap(l->minus_infinity, l->plus_infinity);
    return l;
  }
  std::optional<Complex> zero_guess() const override {
    auto z = base_->zero_guess();
    if (z) return Complex{-z->real(), z->imag()};
    return z;
  }

 private:
  FamilyPtr base_;
};

}  // namespace

GapFunction HamiltonianFamily::gap_function() const {
  GapFunction g;
  g.rho_squared = [this](Complex z) {
    const Pauli p = pauli(z);
    return 4.0 * (p.cx * p.cx + p.cy * p.cy + p.cz * p.cz);
  };
  g.rho = [rho2 = g.rho_squared](Complex z) { return std::sqrt(rho2(z)); };
  g.zero_guess = zero_guess();
  return g;
}

FamilyPtr zener(double delta) {
  require(delta > 0.0, "zener requires delta > 0");
  return std::make_shared<Zener>(delta);
}

FamilyPtr constant_gap(double delta) {
  require(delta > 0.0, "constant_gap requires delta > 0");
  return std::make_shared<ConstantGap>(delta);
}

FamilyPtr tanh_model(double delta) {
  require(delta > 0.0 && delta < 1.0, "tanh_model requires 0 < delta < 1");
  return std::make_shared<Tanh>(delta);
}

FamilyPtr decoupled_tanh() { return std::make_shared<Tanh>(0.0); }

FamilyPtr constant_family(const Matrix2& h) { return std::make_shared<Constant>(h); }

FamilyPtr mirrored(FamilyPtr base) { return std::make_shared<Mirrored>(std::move(base)); }

Matrix2 derivative(const HamiltonianFamily& family, double t, int order) {
  require(order >= 1, "derivative order must be >= 1");
  PauliSeries j = family.jet(t, order);
  double factorial = 1.0;
  for (int n = 2; n <= order; ++n) factorial *= n;
  const Pauli p{j.c0[order] * factorial, j.cx[order] * factorial, j.cy[order] * factorial,
                j.cz[order] * factorial};
  return from_pauli(p);
}

}  // namespace nadlab
