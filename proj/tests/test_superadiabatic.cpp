#include <doctest.h>

#include <cmath>

#include "nadlab/errors.hpp"
#include "nadlab/superadiabatic.hpp"

using namespace nadlab;

namespace {

std::vector<double> grid(double a, double b, int n) {
  std::vector<double> g;
  for (int i = 0; i <= n; ++i) g.push_back(a + (b - a) * i / n);
  return g;
}

EvolutionSpec make_spec(double eps, double t0, double t1) {
  EvolutionSpec s;
  s.epsilon = eps;
  s.t_start = t0;
  s.t_end = t1;
  s.step_control.tolerance_per_unit_time = 1e-12;
  return s;
}

}  // namespace

TEST_SUITE("superadiabatic") {
  TEST_CASE("level zero is the spectral projector") {
    const FamilyPtr f = zener(1.0);
    for (double t : {-2.0, 0.0, 0.7}) {
      CHECK(operator_norm(superadiabatic_projector(*f, 0.2, t, 0) - f->frame(t).p_low) < 1e-14);
    }
  }

  TEST_CASE("hierarchy projectors are Hermitian rank-one idempotents") {
    const HierarchyPoint h = hierarchy_at(*tanh_model(0.5), 0.15, 0.3, 8);
    REQUIRE(h.p.size() == 9);
    for (const Matrix2& p : h.p) {
      CHECK(operator_norm(p * p - p) < 1e-12);
      CHECK(operator_norm(p - p.adjoint()) < 1e-12);
      CHECK(std::abs(p.trace() - 1.0) < 1e-12);
    }
  }

  TEST_CASE("successive projectors differ by O(eps^q)") {
    const FamilyPtr f = zener(1.0);
    const HierarchyPoint a = hierarchy_at(*f, 0.1, 0.5, 3);
    const HierarchyPoint b = hierarchy_at(*f, 0.05, 0.5, 3);
    // ||P_1 - P_0|| is first order in eps.
    const double ra = operator_norm(a.p[1] - a.p[0]), rb = operator_norm(b.p[1] - b.p[0]);
    CHECK(ra / rb == doctest::Approx(2.0).epsilon(0.05));
  }

  TEST_CASE("V_q intertwines P_q at both ends") {
    const FamilyPtr f = constant_gap(1.0);
    for (int q : {0, 1, 2}) {
      const Matrix2 v = evolve_vq(*f, make_spec(0.2, -3.0, 3.0), q).u_matrix;
      const Matrix2 p0 = superadiabatic_projector(*f, 0.2, -3.0, q), p1 = superadiabatic_projector(*f, 0.2, 3.0, q);
      CHECK(operator_norm(v * p0 - p1 * v) < 1e-9);
    }
  }

  TEST_CASE("Taylor and finite-difference hierarchies agree") {
    const FamilyPtr f = zener(1.0);
    const std::vector<double> g = grid(-2.0, 2.0, 400);
    const ProjectorHierarchy exact = build_hierarchy(*f, 0.2, g, 3);
    HierarchyOptions o;
    o.differentiation = Differentiation::kCentralRichardson;
    o.max_differentiation_error = 1e-5;
    const ProjectorHierarchy fd = build_hierarchy(*f, 0.2, g, 3, o);
    REQUIRE(fd.q_max() == exact.q_max());
    const std::size_t mid = 200;
    for (int q = 0; q <= 3; ++q) {
      const HierarchyLevel& le = exact.levels[static_cast<std::size_t>(q)];
      const HierarchyLevel& lf = fd.levels[static_cast<std::size_t>(q)];
      CHECK(operator_norm(le.p[mid] - lf.p[mid]) < 1e-6);
    }
  }

  TEST_CASE("optimal level is interior at small epsilon") {
    HierarchyOptions o;
    o.truncate_on_gap_closure = true;
    const ProjectorHierarchy h = build_hierarchy(*zener(1.0), 0.1, grid(-6.0, 6.0, 240), 20, o);
    const OptimalLevel opt = optimal_q(h);
    CHECK_FALSE(opt.on_boundary);
    CHECK(opt.q > 1);
    CHECK(h.error_proxy[static_cast<std::size_t>(opt.q)] < h.error_proxy[0]);
  }

  TEST_CASE("superadiabatic history is monotone-like while the instantaneous one oscillates") {
    const FamilyPtr f = constant_gap(1.0);
    HierarchyOptions o;
    o.truncate_on_gap_closure = true;
    const ProjectorHierarchy h = build_hierarchy(*f, 0.2, grid(-10.0, 10.0, 200), 12, o);
    const TransitionHistory sa = transition_history(*f, h, h.q_star);
    const TransitionHistory inst = transition_history(*f, h, 0);
    double inst_max = 0.0;
    for (double c : inst.coefficients) inst_max = std::max(inst_max, c);
    CHECK(inst_max > 2.0 * sa.coefficients.back());
    // Both bases agree far from the crossing.
    CHECK(sa.coefficients.back() == doctest::Approx(inst.coefficients.back()).epsilon(0.05));
  }

  TEST_CASE("erf fit recovers a synthetic switching profile") {
    std::vector<double> t, v;
    for (int i = 0; i <= 400; ++i) {
      t.push_back(-4.0 + 0.02 * i);
      v.push_back(0.03 * 0.5 * (std::erf((t.back() - 0.1) / 0.6) + 1.0));
    }
    const ErfFit fit = erf_profile_fit(t, v, 1.0, 0.18);
    CHECK(fit.amplitude == doctest::Approx(0.03).epsilon(1e-6));
    CHECK(fit.center == doctest::Approx(0.1).epsilon(1e-6));
    CHECK(fit.width == doctest::Approx(0.6).epsilon(1e-6));
    CHECK(fit.max_residual < 1e-6);
  }

  TEST_CASE("invalid inputs") {
    CHECK_THROWS_AS(hierarchy_at(*zener(1.0), 0.0, 0.0, 2), Error);
    CHECK_THROWS_AS(build_hierarchy(*zener(1.0), 0.1, {}, 2), Error);
  }
}
