#include "nadlab/core_linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "nadlab/errors.hpp"

namespace nadlab {

namespace {

constexpr Complex kI{0.0, 1.0};

// cos(sqrt(s)) and sin(sqrt(s))/sqrt(s), both entire in s.
std::pair<Complex, Complex> cos_sinc_sqrt(Complex s) {
  if (std::abs(s) < 1e-6) {
    const Complex c = 1.0 - s / 2.0 + s * s / 24.0 - s * s * s / 720.0;
    const Complex sn = 1.0 - s / 6.0 + s * s / 120.0 - s * s * s / 5040.0;
    return {c, sn};
  }
  const Complex r = std::sqrt(s);
  return {std::cos(r), std::sin(r) / r};
}

Matrix2 inverse(const Matrix2& m) {
  const Complex det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
  Matrix2 inv;
  inv << m(1, 1), -m(0, 1), -m(1, 0), m(0, 0);
  return inv / det;
}

}  // namespace

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNonHermitianInput: return "NonHermitianInput";
    case ErrorCode::kDegenerateSpectrum: return "DegenerateSpectrum";
    case ErrorCode::kInvalidParameter: return "InvalidParameter";
    case ErrorCode::kStepUnderflow: return "StepUnderflow";
    case ErrorCode::kGapClosure: return "GapClosure";
    case ErrorCode::kGridTooCoarse: return "GridTooCoarse";
    case ErrorCode::kFitDiverged: return "FitDiverged";
    case ErrorCode::kNoConvergence: return "NoConvergence";
    case ErrorCode::kZeroOnRealAxis: return "ZeroOnRealAxis";
    case ErrorCode::kBranchDiscontinuity: return "BranchDiscontinuity";
    case ErrorCode::kInsufficientData: return "InsufficientData";
    case ErrorCode::kNonPositiveAmplitude: return "NonPositiveAmplitude";
    case ErrorCode::kWindowTooSmall: return "WindowTooSmall";
    case ErrorCode::kEnergyOutsideWindow: return "EnergyOutsideWindow";
    case ErrorCode::kMinimumOnBoundary: return "MinimumOnBoundary";
    case ErrorCode::kQuadratureUnderResolved: return "QuadratureUnderResolved";
    case ErrorCode::kNormalizationViolation: return "NormalizationViolation";
    case ErrorCode::kConfigInvalid: return "ConfigInvalid";
    case ErrorCode::kSchemaMismatch: return "SchemaMismatch";
  }
  return "Unknown";
}

Pauli to_pauli(const Matrix2& m) {
  Pauli p;
  p.c0 = 0.5 * (m(0, 0) + m(1, 1));
  p.cz = 0.5 * (m(0, 0) - m(1, 1));
  p.cx = 0.5 * (m(0, 1) + m(1, 0));
  p.cy = 0.5 * kI * (m(0, 1) - m(1, 0));
  return p;
}

Matrix2 from_pauli(const Pauli& p) {
  Matrix2 m;
  m << p.c0 + p.cz, p.cx - kI * p.cy, p.cx + kI * p.cy, p.c0 - p.cz;
  return m;
}

Matrix2 sigma_x() {
  Matrix2 m;
  m << 0.0, 1.0, 1.0, 0.0;
  return m;
}

Matrix2 sigma_y() {
  Matrix2 m;
  m << 0.0, -kI, kI, 0.0;
  return m;
}

Matrix2 sigma_z() {
  Matrix2 m;
  m << 1.0, 0.0, 0.0, -1.0;
  return m;
}

double operator_norm(const Matrix2& m) {
  const double fro2 = m.squaredNorm();
  const double det = std::abs(m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0));
  const double disc = std::max(0.0, fro2 * fro2 - 4.0 * det * det);
  return std::sqrt(0.5 * (fro2 + std::sqrt(disc)));
}

HermitianMatrix2::HermitianMatrix2(const Matrix2& m) {
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  const double defect = (m - m.adjoint()).cwiseAbs().maxCoeff();
  if (defect > kHermitianTolerance * scale) {
    std::ostringstream os;
    os << "hermiticity defect " << defect;
    throw Error(ErrorCode::kNonHermitianInput, os.str());
  }
  m_ = 0.5 * (m + m.adjoint());
}

SpectralFrame eigen_decompose(const HermitianMatrix2& hm) {
  const Pauli p = to_pauli(hm.matrix());
  const double a0 = p.c0.real();
  const double x = p.cx.real();
  const double y = p.cy.real();
  const double z = p.cz.real();
  const double r = std::hypot(x, y, z);

  SpectralFrame f;
  f.e_low = a0 - r;
  f.e_high = a0 + r;
  f.gap = 2.0 * r;
  f.degenerate = f.gap < kDegeneracyThreshold;

  double nx = 0.0, ny = 0.0, nz = 1.0;
  if (r > 0.0) {
    nx = x / r;
    ny = y / r;
    nz = z / r;
  }
  Pauli n{0.0, nx, ny, nz};
  const Matrix2 nsig = from_pauli(n);
  f.p_low = 0.5 * (Matrix2::Identity() - nsig);
  f.p_high = 0.5 * (Matrix2::Identity() + nsig);

  // Eigenvectors of n.sigma; pick the formula that avoids cancellation.
  const Complex nm{nx, -ny};  // nx - i ny
  const Complex np{nx, ny};
  if (nz >= 0.0) {
    f.v_high = Vector2(1.0 + nz, np);
    f.v_low = Vector2(-nm, 1.0 + nz);
  } else {
    f.v_high = Vector2(nm, 1.0 - nz);
    f.v_low = Vector2(1.0 - nz, -np);
  }
  f.v_high.normalize();
  f.v_low.normalize();
  return f;
}

Matrix2 commutator(const Matrix2& a, const Matrix2& b) { return a * b - b * a; }

Matrix2 unitary_step(const Matrix2& generator, double scale) {
  // exp(-i s (c0 + c.sigma)) = exp(-i s c0) [cos(s w) - i s sinc(s w) c.sigma],
  // w^2 = c.c; written through entire functions of (s w)^2 so complex
  // generators need no branch choice.
  const Pauli p = to_pauli(generator);
  const Complex w2 = p.cx * p.cx + p.cy * p.cy + p.cz * p.cz;
  const auto [c, sinc] = cos_sinc_sqrt(scale * scale * w2);
  const Complex phase = std::exp(-kI * scale * p.c0);
  Pauli q{c, -kI * scale * sinc * p.cx, -kI * scale * sinc * p.cy, -kI * scale * sinc * p.cz};
  return phase * from_pauli(q);
}

SpectralFrame phase_align(const SpectralFrame& prev, const SpectralFrame& next) {
  if (prev.degenerate || next.degenerate) {
    throw Error(ErrorCode::kDegenerateSpectrum, "phase_align on a degenerate frame");
  }
  SpectralFrame out = next;
  auto align = [](const Vector2& ref, Vector2& v) {
    const Complex ov = ref.dot(v);  // <ref, v>
    if (std::abs(ov) > 0.0) v *= std::conj(ov) / std::abs(ov);
  };
  align(prev.v_low, out.v_low);
  align(prev.v_high, out.v_high);
  return out;
}

Matrix2 riesz_projector(const Matrix2& m, Complex center, double radius, int nodes) {
  Matrix2 acc = Matrix2::Zero();
  const Matrix2 id = Matrix2::Identity();
  for (int k = 0; k < nodes; ++k) {
    const double phi = 2.0 * std::numbers::pi * (k + 0.5) / nodes;
    const Complex e = std::polar(1.0, phi);
    const Complex zk = center + radius * e;
    acc += (radius * e) * inverse(zk * id - m);
  }
  return acc / static_cast<double>(nodes);
}

std::pair<Complex, Complex> eigenvalues(const Matrix2& m) {
  const Pauli p = to_pauli(m);
  const Complex w = std::sqrt(p.cx * p.cx + p.cy * p.cy + p.cz * p.cz);
  return {p.c0 - w, p.c0 + w};
}

}  // namespace nadlab
