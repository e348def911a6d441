#include <doctest.h>

#include <cmath>
#include <numbers>

#include "nadlab/bo_scattering.hpp"
#include "nadlab/errors.hpp"

using namespace nadlab;

namespace {

StationaryOptions quick() {
  StationaryOptions o;
  o.abs_tolerance = o.rel_tolerance = 1e-11;
  return o;
}

std::vector<double> uniform(double a, double b, double h) {
  std::vector<double> x;
  for (double v = a; v <= b; v += h) x.push_back(v);
  return x;
}

}  // namespace

TEST_SUITE("bo_scattering") {
  TEST_CASE("channel data") {
    const ChannelData c = channel_data(*tanh_model(0.25), 0.8);
    CHECK(c.level_minus[1] == doctest::Approx(0.5 * std::hypot(1.0, 0.25)));
    CHECK(c.k_plus[0] == doctest::Approx(std::sqrt(2.0 * (0.8 + 0.5 * std::hypot(1.0, 0.25)))));
    CHECK(upper_level_sup(*tanh_model(0.25)) == doctest::Approx(0.5 * std::hypot(1.0, 0.25)));
    CHECK_THROWS_AS(channel_data(*tanh_model(0.25), 0.3), Error);
  }

  TEST_CASE("decoupled channels do not mix") {
    const StationarySolution s = solve_stationary(*decoupled_tanh(), 0.8, 0.3, quick());
    CHECK(std::abs(s.c(1, -1)) < 1e-12);
    CHECK(std::abs(s.c(1, 1)) < 1e-12);
    CHECK(std::abs(std::abs(s.c(2, -1)) - 1.0) < 1e-8);
  }

  TEST_CASE("flux is conserved and the window has converged") {
    for (double E : {0.7, 0.8, 1.5}) {
      const StationarySolution s = solve_stationary(*tanh_model(0.25), E, 0.35, quick());
      CHECK(s.flux_defect < 1e-8);
      CHECK(s.window_drift < 1e-6);
    }
  }

  TEST_CASE("mirror symmetry preserves the transmitted modulus") {
    const auto a = solve_stationary(*tanh_model(0.3), 0.9, 0.35, quick());
    const auto b = solve_stationary(*mirrored(tanh_model(0.3)), 0.9, 0.35, quick());
    CHECK(std::abs(a.c(1, -1)) == doctest::Approx(std::abs(b.c(1, -1))).epsilon(1e-8));
  }

  TEST_CASE("too small a window is detected") {
    StationaryOptions o = quick();
    o.x_max = 1.0;
    CHECK_THROWS_AS(solve_stationary(*tanh_model(0.25), 0.8, 0.35, o), Error);
  }

  TEST_CASE("log slope approaches the loop integral") {
    const FamilyPtr f = tanh_model(0.25);
    const LogSlope s = transmitted_log_slope(*f, 0.8, {0.5, 0.42, 0.35, 0.3, 0.25}, quick());
    const double contour = crossing_integral(*f, 0.8).value.imag();
    CHECK(-s.slope_vs_inv_eps2 / contour == doctest::Approx(1.0).epsilon(0.05));
    CHECK(s.fit_quality > 0.999);
  }

  TEST_CASE("crossing integral near the small-coupling limit") {
    const FamilyPtr f = tanh_model(0.1);
    const CrossingIntegral c = crossing_integral(*f, 0.8);
    CHECK(c.value.imag() > 0.0);
    const double kc = std::sqrt(1.6);
    CHECK(c.value.imag() == doctest::Approx(0.01 * std::numbers::pi / (4.0 * kc)).epsilon(0.05));
    CHECK(std::abs(crossing_phase_factor(*f) + 1.0) < 1e-6);
  }

  TEST_CASE("alpha minimum moves up in energy") {
    const FamilyPtr f = tanh_model(0.25);
    EnergyDensity d;
    d.E_min = 0.6;
    d.E_max = 1.0;
    const AlphaMinimum m = minimize_alpha(*f, d);
    CHECK(m.E_star > d.E0);
    CHECK(m.alpha_star < alpha_kappa(*f, d, d.E0).alpha);
    CHECK(m.alpha_kk > 0.0);
    // Without the loop term alpha is the Gaussian weight, minimal at E0.
    const AlphaMinimum g = minimize_alpha(*f, d, false);
    CHECK(g.E_star == doctest::Approx(d.E0).epsilon(1e-6));
    CHECK(g.alpha_star == doctest::Approx(0.0).epsilon(1e-12));
  }

  TEST_CASE("minimum on the window edge is reported") {
    EnergyDensity d;
    d.E_min = 0.79;
    d.E_max = 0.801;
    d.E0 = 0.8;
    CHECK_THROWS_AS(minimize_alpha(*tanh_model(0.25), d), Error);
  }

  TEST_CASE("Gaussian packet is normalised") {
    // Semiclassical scale 0.01, momentum 1.5.
    const double dx = 1e-4;
    const Complex A{1.0, 0.7}, B = 1.0 / std::conj(A);
    double n = 0.0;
    for (double x : uniform(-1.0, 1.0, dx)) n += std::norm(gaussian_packet(A, B, 0.01, 0.2, 1.5, x)) * dx;
    CHECK(n == doctest::Approx(1.0).epsilon(1e-8));
  }

  TEST_CASE("mismatch is phase invariant") {
    const std::vector<double> x = uniform(0.0, 4.0, 0.01);
    std::vector<Complex> a, b;
    for (double v : x) {
      b.push_back(std::exp(-(v - 2.0) * (v - 2.0)) * std::exp(Complex{0.0, 3.0 * v}));
      a.push_back(b.back() * std::exp(Complex{0.0, 1.1}));
    }
    CHECK(relative_l2_mismatch(x, a, b) < 1e-12);
    for (auto& v : a) v *= 1.1;
    CHECK(relative_l2_mismatch(x, a, b) == doctest::Approx(0.1).epsilon(1e-9));
  }

  TEST_CASE("Gaussian fit") {
    const std::vector<double> x = uniform(-5.0, 5.0, 0.01);
    std::vector<double> y;
    for (double v : x) y.push_back(2.0 * std::exp(-(v - 0.3) * (v - 0.3) / (2.0 * 0.49)));
    const GaussianFit g = fit_gaussian(x, y);
    CHECK(g.peak == doctest::Approx(2.0).epsilon(1e-8));
    CHECK(g.center == doctest::Approx(0.3).epsilon(1e-8));
    CHECK(g.width == doctest::Approx(0.7).epsilon(1e-8));
  }

  TEST_CASE("synthesised packets: incoming limit, Plancherel, prediction") {
    const FamilyPtr f = tanh_model(0.25);
    EnergyDensity d;
    d.E_min = 0.6;
    d.E_max = 1.0;
    const double eps = 0.2, eta = eps * eps;
    StationaryOptions o = quick();
    o.check_window = false;

    // Long before the crossing the packet is the free incoming one.
    const std::vector<double> xl = uniform(-40.0, -20.0, eta / 10.0);
    const EnergyGrid grid = solve_energy_grid(*f, d, eps, 96, o);
    const PacketField in = synthesize_packet(*f, d, grid, -20.0, xl, ChannelFilter{2, -1});
    const std::vector<Complex> free = incoming_packet(*f, d, eps, -20.0, xl, 96);
    CHECK(relative_l2_mismatch(xl, in.scalar, free, -1e9) < 1e-6);

    const AlphaMinimum m = minimize_alpha(*f, d);
    const std::vector<double> xr = uniform(20.0, 45.0, eta / 10.0);
    const PacketField out = synthesize_packet(*f, d, grid, 20.0, xr, ChannelFilter{1, -1});
    double expected = 0.0;
    for (std::size_t k = 0; k < grid.energies.size(); ++k) {
      expected += grid.weights[k] * std::norm(d.Q(grid.energies[k], eps) * grid.solutions[k].c(1, -1));
    }
    CHECK(out.l2_norm == doctest::Approx(std::sqrt(std::numbers::pi * eta * expected)).epsilon(1e-3));

    const PredictedPacket p = predicted_transmitted_packet(*f, d, m, eps, 20.0, xr);
    CHECK(std::abs((std::conj(p.B_plus) * p.A_plus).real() - 1.0) < 1e-10);
    CHECK(relative_l2_mismatch(xr, out.scalar, p.field) < 0.1);
  }

  TEST_CASE("a non-Gaussian amplitude still transmits a Gaussian") {
    const FamilyPtr f = tanh_model(0.25);
    EnergyDensity d;
    d.E_min = 0.6;
    d.E_max = 1.0;
    d.P = [](double E, double) { return Complex{1.0 + 3.0 * (E - 0.8), 0.5 * (E - 0.8)}; };
    const double eps = 0.15;
    StationaryOptions o = quick();
    o.check_window = false;
    const EnergyGrid grid = solve_energy_grid(*f, d, eps, 128, o);
    const std::vector<double> x = uniform(26.0, 38.0, eps * eps / 10.0);
    const PacketField out = synthesize_packet(*f, d, grid, 20.0, x, ChannelFilter{1, -1});
    std::vector<double> rho;
    for (const Complex& v : out.scalar) rho.push_back(std::norm(v));
    CHECK(fit_gaussian(x, rho).max_residual < 0.05);
  }
}
