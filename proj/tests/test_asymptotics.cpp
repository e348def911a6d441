#include <doctest.h>

#include <cmath>
#include <numbers>

#include "nadlab/asymptotics.hpp"
#include "nadlab/contour.hpp"
#include "nadlab/errors.hpp"

using namespace nadlab;

TEST_SUITE("contour") {
  TEST_CASE("loop integral of 1/(z - z0) is 2 pi i") {
    const Complex z0{0.4, 0.8};
    const ContourResult r = integrate(loop_around(z0, 0.3), [z0] {
      return Continuation([z0](Complex z) { return 1.0 / (z - z0); });
    });
    CHECK(std::abs(r.value - Complex{0.0, 2.0 * std::numbers::pi}) < 1e-11);
  }

  TEST_CASE("square-root continuation changes sheet around a branch point") {
    const Complex z0{0.0, 1.0};
    const auto square = [z0](Complex z) { return z - z0; };
    const ContourPath path = loop_around(z0, 0.5);
    Continuation c = sqrt_continuation(square, std::sqrt(-z0));
    Complex first, last;
    const int n = 4000;
    bool started = false;
    for (const PathPiece& piece : path.pieces()) {
      for (int i = 0; i <= n; ++i) {
        const Complex v = c(piece.point(static_cast<double>(i) / n));
        if (!started) first = v;
        started = true;
        last = v;
      }
    }
    CHECK(std::abs(last + first) < 1e-10);
  }

  TEST_CASE("Gauss-Legendre rule integrates polynomials exactly") {
    const GaussRule& g = gauss_legendre(10);
    double s = 0.0;
    for (std::size_t i = 0; i < g.nodes.size(); ++i) s += g.weights[i] * std::pow(g.nodes[i], 18);
    CHECK(s == doctest::Approx(2.0 / 19.0).epsilon(1e-14));
  }
}

TEST_SUITE("asymptotics") {
  TEST_CASE("closed forms") {
    CHECK(lz_amplitude(1.0, 0.25) == doctest::Approx(std::exp(-std::numbers::pi)));
    CHECK(erf_switch(0.0) == doctest::Approx(0.5));
    CHECK(erf_switch(6.0) == doctest::Approx(1.0));
    CHECK_THROWS_AS(lz_amplitude(1.0, 0.0), Error);
  }

  TEST_CASE("Zener zero and decay rate") {
    for (double d : {0.5, 1.0, 2.0}) {
      const FamilyPtr f = zener(d);  // the gap function refers to the family
      const GapFunction g = f->gap_function();
      const Complex z0 = find_complex_zero(g);
      CHECK(std::abs(z0 - Complex{0.0, d}) < 1e-12);
      const DecayRatePrediction p = decay_rate(g);
      CHECK(p.gamma == doctest::Approx(std::numbers::pi * d * d / 4.0).epsilon(1e-10));
      CHECK(std::abs(natural_time(*f, z0).imag()) == doctest::Approx(p.gamma).epsilon(1e-10));
    }
  }

  TEST_CASE("contour deformation leaves the decay rate unchanged") {
    const FamilyPtr f = tanh_model(0.4);
    const GapFunction g = f->gap_function();
    const double a = decay_rate(g, 0.5).gamma, b = decay_rate(g, 0.1).gamma;
    CHECK(std::abs(a - b) / a < 1e-9);
  }

  TEST_CASE("families without a complex zero are rejected") {
    const FamilyPtr f = constant_gap(1.0);
    CHECK_THROWS_AS(decay_rate(f->gap_function()), Error);
  }

  TEST_CASE("exponential fit recovers synthetic data") {
    std::vector<std::pair<double, double>> pts;
    for (double e : {0.25, 0.2, 0.15, 0.125, 0.1}) pts.emplace_back(e, 1.3 * std::exp(-0.7 / e));
    const ExponentialFit fit = fit_exponential(pts);
    CHECK(fit.G == doctest::Approx(1.3).epsilon(1e-10));
    CHECK(fit.gamma == doctest::Approx(0.7).epsilon(1e-10));
    CHECK(fit.accepted);
  }

  TEST_CASE("exponential fit drops amplitudes below the floor") {
    std::vector<std::pair<double, double>> pts;
    for (double e : {0.3, 0.25, 0.2, 0.15, 0.05}) pts.emplace_back(e, std::exp(-1.0 / e));
    ExponentialFitOptions o;
    o.amplitude_floor = 1e-6;
    const ExponentialFit fit = fit_exponential(pts, o);
    CHECK(fit.epsilons_used.size() == 4);
  }

  TEST_CASE("exponential fit needs data") {
    CHECK_THROWS_AS(fit_exponential({{0.1, 1e-3}}), Error);
  }
}
