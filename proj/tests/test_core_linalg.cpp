#include <doctest.h>

#include <unsupported/Eigen/MatrixFunctions>

#include "nadlab/core_linalg.hpp"
#include "nadlab/errors.hpp"

using namespace nadlab;

namespace {

Matrix2 hermitian(double a, double b, Complex c) {
  Matrix2 m;
  m << a, c, std::conj(c), b;
  return m;
}

}  // namespace

TEST_SUITE("core_linalg") {
  TEST_CASE("pauli round trip") {
    const Matrix2 m = hermitian(0.3, -1.1, {0.4, -0.7});
    CHECK(operator_norm(from_pauli(to_pauli(m)) - m) < 1e-15);
    const Pauli p = to_pauli(sigma_y());
    CHECK(std::abs(p.cy - 1.0) < 1e-15);
    CHECK(std::abs(p.cx) + std::abs(p.cz) + std::abs(p.c0) < 1e-15);
  }

  TEST_CASE("spectral decomposition reconstructs and projectors are orthogonal") {
    for (double a : {-2.0, 0.0, 1.5}) {
      const Matrix2 m = hermitian(a, 0.25, {0.3, 0.9});
      const SpectralFrame f = eigen_decompose(HermitianMatrix2(m));
      CHECK(operator_norm(f.reconstruct() - m) < 1e-14);
      CHECK(operator_norm(f.p_low * f.p_low - f.p_low) < 1e-14);
      CHECK(operator_norm(f.p_low * f.p_high) < 1e-14);
      CHECK(operator_norm(f.p_low + f.p_high - Matrix2::Identity()) < 1e-14);
      CHECK(f.gap == doctest::Approx(f.e_high - f.e_low).epsilon(1e-14));
      CHECK((m * f.v_low - f.e_low * f.v_low).norm() < 1e-14);
    }
  }

  TEST_CASE("non-Hermitian input is rejected") {
    Matrix2 m = hermitian(1.0, 2.0, {0.5, 0.0});
    m(0, 1) += Complex{1e-6, 0.0};
    CHECK_THROWS_AS(HermitianMatrix2{m}, Error);
    try {
      HermitianMatrix2{m};
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kNonHermitianInput);
    }
  }

  TEST_CASE("degenerate spectrum is flagged") {
    const SpectralFrame f = eigen_decompose(HermitianMatrix2(Matrix2::Identity() * 0.7));
    CHECK(f.degenerate);
    CHECK(operator_norm(f.p_low + f.p_high - Matrix2::Identity()) < 1e-14);
  }

  TEST_CASE("unitary step matches the matrix exponential") {
    const Matrix2 h = hermitian(0.2, -0.9, {1.3, 0.4});
    for (double s : {1e-3, 0.7, 12.0}) {
      const Matrix2 exact = (Complex{0.0, -s} * h).exp();
      const Matrix2 u = unitary_step(h, s);
      CHECK(operator_norm(u - exact) < 1e-13);
      CHECK(operator_norm(u.adjoint() * u - Matrix2::Identity()) < 1e-14);
    }
    // Non-Hermitian generators are allowed.
    Matrix2 g;
    g << Complex{0.1, 0.2}, 1.0, Complex{0.0, -0.3}, -0.4;
    CHECK(operator_norm(unitary_step(g, 0.9) - (Complex{0.0, -0.9} * g).exp()) < 1e-13);
  }

  TEST_CASE("Riesz projector equals the spectral projector") {
    const Matrix2 m = hermitian(1.0, -1.0, {0.5, 0.5});
    const SpectralFrame f = eigen_decompose(HermitianMatrix2(m));
    CHECK(operator_norm(riesz_projector(m, f.e_low, 0.5 * f.gap) - f.p_low) < 1e-12);
    CHECK(operator_norm(riesz_projector(m, f.e_high, 0.5 * f.gap) - f.p_high) < 1e-12);
  }

  TEST_CASE("phase alignment makes overlaps real and positive") {
    const SpectralFrame a = eigen_decompose(HermitianMatrix2(hermitian(1.0, -1.0, {0.5, 0.5})));
    SpectralFrame b = eigen_decompose(HermitianMatrix2(hermitian(1.05, -1.0, {0.5, 0.45})));
    b.v_low *= Complex{0.0, -1.0};
    const SpectralFrame c = phase_align(a, b);
    const Complex o = a.v_low.dot(c.v_low);
    CHECK(o.real() > 0.9);
    CHECK(std::abs(o.imag()) < 1e-14);
    CHECK(operator_norm(c.p_low - b.p_low) < 1e-14);
  }

  TEST_CASE("eigenvalues of a general matrix") {
    Matrix2 m;
    m << Complex{1.0, 1.0}, 2.0, Complex{0.0, 1.0}, -0.5;
    const auto [l1, l2] = eigenvalues(m);
    CHECK(std::abs(l1 + l2 - m.trace()) < 1e-14);
    CHECK(std::abs(l1 * l2 - m.determinant()) < 1e-14);
  }

  TEST_CASE("commutator") {
    CHECK(operator_norm(commutator(sigma_x(), sigma_y()) - Complex{0.0, 2.0} * sigma_z()) < 1e-15);
  }
}
