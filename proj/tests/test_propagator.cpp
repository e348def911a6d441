#include <doctest.h>

#include <cmath>

#include "nadlab/errors.hpp"
#include "nadlab/propagator.hpp"

using namespace nadlab;

namespace {

EvolutionSpec make_spec(double eps, double t0, double t1, double tol = 1e-11) {
  EvolutionSpec s;
  s.epsilon = eps;
  s.t_start = t0;
  s.t_end = t1;
  s.step_control.tolerance_per_unit_time = tol;
  return s;
}

// Forces a uniform step by making every step acceptable.
EvolutionSpec fixed_step(double eps, double t0, double t1, double h) {
  EvolutionSpec s = make_spec(eps, t0, t1, 1e30);
  s.step_control.initial_step = h;
  s.step_control.max_step = h;
  return s;
}

}  // namespace

TEST_SUITE("propagator") {
  TEST_CASE("time-independent Hamiltonian is integrated exactly") {
    Matrix2 h;
    h << 0.3, Complex{0.2, -0.1}, Complex{0.2, 0.1}, -0.6;
    const FamilyPtr f = constant_family(h);
    const PropagatorResult r = evolve_u(*f, make_spec(0.2, 0.0, 3.0));
    CHECK(operator_norm(r.u_matrix - unitary_step(h, 3.0 / 0.2)) < 1e-12);
  }

  TEST_CASE("fourth-order convergence under step halving") {
    const FamilyPtr f = zener(1.0);
    const Matrix2 ref = evolve_u(*f, make_spec(0.5, -2.0, 2.0, 1e-12)).u_matrix;
    const double e1 = operator_norm(evolve_u(*f, fixed_step(0.5, -2.0, 2.0, 0.2)).u_matrix - ref);
    const double e2 = operator_norm(evolve_u(*f, fixed_step(0.5, -2.0, 2.0, 0.1)).u_matrix - ref);
    const double order = std::log2(e1 / e2);
    CHECK(order > 3.6);
    CHECK(order < 4.6);
  }

  TEST_CASE("tolerance controls the global error") {
    const FamilyPtr f = tanh_model(0.5);
    const Matrix2 ref = evolve_u(*f, make_spec(0.1, -5.0, 5.0, 1e-12)).u_matrix;
    double last = 1.0;
    for (double tol : {1e-6, 1e-8, 1e-10}) {
      const double err = operator_norm(evolve_u(*f, make_spec(0.1, -5.0, 5.0, tol)).u_matrix - ref);
      CHECK(err < 20.0 * tol * 10.0);
      CHECK(err < last);
      last = err;
    }
  }

  TEST_CASE("samples land exactly on the requested times") {
    EvolutionSpec s = make_spec(0.2, -1.0, 1.0);
    s.sample_times = {0.5, -0.25, 1.0};
    const PropagatorResult r = evolve_u(*zener(1.0), s);
    REQUIRE(r.history_times.size() == 3);
    CHECK(r.history_times[0] == -0.25);
    CHECK(r.history_times[2] == 1.0);
    CHECK(operator_norm(r.history.back() - r.u_matrix) == 0.0);
    const Matrix2 direct = evolve_u(*zener(1.0), make_spec(0.2, -1.0, 0.5)).u_matrix;
    CHECK(operator_norm(r.history[1] - direct) < 1e-9);
  }

  TEST_CASE("adiabatic evolution intertwines the spectral projectors") {
    const FamilyPtr f = zener(1.0);
    const EvolutionSpec s = make_spec(0.3, -3.0, 2.0);
    const Matrix2 v = evolve_v(*f, s).u_matrix;
    const Matrix2 p0 = f->frame(-3.0).p_low, p1 = f->frame(2.0).p_low;
    CHECK(operator_norm(v * p0 - p1 * v) < 1e-9);
    CHECK(unitarity_defect(v) < 1e-13);
  }

  TEST_CASE("adiabatic defect shrinks with epsilon") {
    const FamilyPtr f = constant_gap(1.0);
    const double big = adiabatic_defect(*f, make_spec(0.3, -10.0, 10.0));
    const double small = adiabatic_defect(*f, make_spec(0.1, -10.0, 10.0));
    CHECK(small < big);
  }

  TEST_CASE("invalid specs are rejected") {
    CHECK_THROWS_AS(validate(make_spec(0.0, 0.0, 1.0)), Error);
    CHECK_THROWS_AS(validate(make_spec(1.5, 0.0, 1.0)), Error);
    CHECK_THROWS_AS(validate(make_spec(0.1, 0.0, INFINITY)), Error);
    EvolutionSpec s = make_spec(0.1, 0.0, 1.0);
    s.sample_times = {2.0};
    CHECK_THROWS_AS(evolve_u(*zener(1.0), s), Error);
  }
}
