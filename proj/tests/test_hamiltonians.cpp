#include <doctest.h>

#include <cmath>

#include "nadlab/errors.hpp"
#include "nadlab/hamiltonians.hpp"

using namespace nadlab;

TEST_SUITE("hamiltonians") {
  TEST_CASE("jets agree with finite differences") {
    for (const FamilyPtr& f : {zener(0.8), constant_gap(1.2), tanh_model(0.3), mirrored(tanh_model(0.3))}) {
      for (double t : {-1.3, 0.0, 0.4}) {
        const double h = 1e-4;
        const Matrix2 fd = (f->evaluate(t + h) - f->evaluate(t - h)) / (2.0 * h);
        CHECK(operator_norm(derivative(*f, t) - fd) < 1e-7);
        const Matrix2 fd2 = (f->evaluate(t + h) - 2.0 * f->evaluate(t) + f->evaluate(t - h)) / (h * h);
        CHECK(operator_norm(derivative(*f, t, 2) - fd2) < 1e-5);
      }
    }
  }

  TEST_CASE("gap function matches the real-axis gap") {
    for (const FamilyPtr& f : {zener(0.5), constant_gap(1.0), tanh_model(0.25)}) {
      const GapFunction g = f->gap_function();
      for (double t : {-2.0, 0.1, 3.0}) {
        CHECK(std::abs(g.rho_squared(t) - f->gap(t) * f->gap(t)) < 1e-13);
        CHECK(std::abs(g.rho(t) - f->gap(t)) < 1e-13);
      }
    }
  }

  TEST_CASE("closed forms") {
    CHECK(zener(1.0)->gap(0.0) == doctest::Approx(1.0));
    CHECK(zener(1.0)->gap(3.0) == doctest::Approx(std::sqrt(10.0)));
    CHECK(constant_gap(0.4)->gap(7.0) == doctest::Approx(1.0));
    CHECK(tanh_model(0.25)->gap(0.0) == doctest::Approx(0.25));
    // The Zener gap vanishes at t = i delta.
    CHECK(std::abs(zener(0.7)->gap_function().rho_squared(Complex{0.0, 0.7})) < 1e-14);
  }

  TEST_CASE("hermitian on the real axis") {
    for (const FamilyPtr& f : {zener(1.0), constant_gap(1.0), tanh_model(0.5), decoupled_tanh()}) {
      const Matrix2 m = f->evaluate(0.37);
      CHECK(operator_norm(m - m.adjoint()) < 1e-15);
    }
  }

  TEST_CASE("mirroring reflects the argument") {
    const FamilyPtr f = tanh_model(0.4);
    const FamilyPtr m = mirrored(f);
    CHECK(operator_norm(m->evaluate(1.3) - f->evaluate(-1.3)) < 1e-15);
    CHECK(operator_norm(derivative(*m, 0.5) + derivative(*f, -0.5)) < 1e-13);
  }

  TEST_CASE("tanh limits") {
    const auto lim = tanh_model(0.25)->limits();
    REQUIRE(lim.has_value());
    CHECK(operator_norm(tanh_model(0.25)->evaluate(40.0) - lim->plus_infinity) < 1e-12);
    CHECK(operator_norm(tanh_model(0.25)->evaluate(-40.0) - lim->minus_infinity) < 1e-12);
  }

  TEST_CASE("parameter validation") {
    CHECK_THROWS_AS(zener(-1.0), Error);
    CHECK_THROWS_AS(tanh_model(1.5), Error);
  }
}
