#pragma once

// Born-Oppenheimer scattering through an avoided crossing of a real
// symmetric two-level electronic Hamiltonian h(x): stationary solutions of
//   (-(eps^4 / 2) d^2/dx^2 + h(x)) Phi = E Phi
// in the slowly varying WKB-coefficient frame, the complex-analytic decay
// exponent alpha(E), and energy-superposed wave packets.
//
// Channel j = 1 is the lower level, j = 2 the upper one; sigma = -1 moves to
// the right. With eta = eps^2,
//   Phi = sum c_j^sigma phi_j / sqrt(2 k_j) exp(-i sigma int_0^x k_j / eta).
// The derivation of the coefficient system is in docs/coefficient_ode.md.

#include <array>
#include <functional>
#include <optional>
#include <vector>

#include "nadlab/contour.hpp"
#include "nadlab/hamiltonians.hpp"

namespace nadlab {

/// Asymptotic channel data at one energy.
struct ChannelData {
  double energy = 0.0;
  // Level energies E_j(-inf), E_j(+inf), momenta k_j(+-inf) = sqrt(2 (E - E_j)).
  std::array<double, 2> level_minus{}, level_plus{};
  std::array<double, 2> k_minus{}, k_plus{};
  /// omega_j^+- = lim_{x -> +-inf} int_0^x k_j - x k_j(+-inf)
  std::array<double, 2> omega_minus{}, omega_plus{};
};

/// Throws EnergyOutsideWindow unless E exceeds sup_x E_2(x).
ChannelData channel_data(const HamiltonianFamily& electronic, double energy);

/// sup_x E_2(x), the scattering threshold.
double upper_level_sup(const HamiltonianFamily& electronic);

/// Index into coefficient arrays: (j, sigma) -> 2 (j - 1) + (sigma > 0).
constexpr int channel_index(int j, int sigma) { return 2 * (j - 1) + (sigma > 0 ? 1 : 0); }

struct ChannelFilter {
  /// Channel and direction to keep; nullopt keeps everything.
  std::optional<int> channel;
  std::optional<int> sigma;
  bool keeps(int j, int s) const { return (!channel || *channel == j) && (!sigma || *sigma == s); }
};

struct StationaryOptions {
  double x_max = 12.0;
  double abs_tolerance = 1e-12;
  double rel_tolerance = 1e-12;
  /// Re-solve on [-1.25 x_max, 1.25 x_max] and require the coefficients to
  /// agree within drift_tolerance.
  bool check_window = true;
  double drift_tolerance = 1e-6;
  /// Points (inside [-x_max, x_max]) at which Phi is recorded.
  std::vector<double> sample_x;
};

struct StationarySolution {
  double energy = 0.0, epsilon = 0.0, x_max = 0.0;
  /// c_j^sigma at +x_max (indexed by channel_index).
  std::array<Complex, 4> coefficients{};
  /// |sum_j (|c_j^-|^2 - |c_j^+|^2) - 1|; the signed sum is the conserved current.
  double flux_defect = 0.0;
  /// max |c(x_max) - c(1.25 x_max)| when the window check ran.
  double window_drift = 0.0;
  std::vector<double> sample_x;
  /// c_j^sigma exp(-i sigma int_0^x k_j / eta) / sqrt(2 k_j) at sample_x,
  /// and the channel eigenvectors phi_1, phi_2 there.
  std::vector<std::array<Complex, 4>> sample_amplitude;
  std::vector<std::array<Eigen::Vector2d, 2>> sample_phi;
  int steps = 0;

  Complex c(int j, int sigma) const { return coefficients[static_cast<std::size_t>(channel_index(j, sigma))]; }
  /// Phi (restricted by the filter) at sample i.
  Vector2 phi(std::size_t i, const ChannelFilter& filter = {}) const;
};

/// Integrates the coefficient system from -x_max with c_j^sigma = delta_{j2} delta_{sigma,-}.
StationarySolution solve_stationary(const HamiltonianFamily& electronic, double energy, double epsilon,
                                    const StationaryOptions& options = {});

struct LogSlope {
  double slope_vs_inv_eps2 = 0.0;
  double intercept = 0.0;
  double fit_quality = 0.0;  // r^2
  std::vector<double> epsilons;
  std::vector<double> amplitudes;  // |c_1^-|
  std::vector<double> flux_defects;
};

/// Least-squares slope of ln |c_1^-(+inf)| against 1 / eps^2.
LogSlope transmitted_log_slope(const HamiltonianFamily& electronic, double energy,
                               const std::vector<double>& epsilons, const StationaryOptions& options = {});

/// Q(E, eps) = exp(-G / eps^2) exp(-i J / eps^2) P(E, eps), G = g (E - E0)^2 / 2.
struct EnergyDensity {
  double E0 = 0.8;
  double g = 5.0;
  std::function<double(double)> J = [](double) { return 0.0; };
  std::function<Complex(double, double)> P = [](double, double) { return Complex{1.0, 0.0}; };
  double E_min = 0.7, E_max = 0.9;

  double G(double E) const { return 0.5 * g * (E - E0) * (E - E0); }
  Complex Q(double E, double epsilon) const;
};

/// Loop integral of k_2(z, E) around the complex crossing z0, oriented so
/// that its imaginary part is positive (the transmitted amplitude decays).
struct CrossingIntegral {
  Complex value;
  Complex z0;
  double error_estimate = 0.0;
};
CrossingIntegral crossing_integral(const HamiltonianFamily& electronic, double energy);

struct AlphaKappa {
  double alpha = 0.0;
  double kappa = 0.0;
  /// Im of the loop integral alone (the decay rate of |c_1^-| in 1/eps^2).
  double contour_term = 0.0;
  double omega1_plus = 0.0;
  Complex z0;
};

/// alpha = G + Im loop(k2), kappa = J - Re loop(k2) - omega_1^+. When
/// include_contour is false the loop term is dropped (pure Gaussian check).
AlphaKappa alpha_kappa(const HamiltonianFamily& electronic, const EnergyDensity& density, double energy,
                       bool include_contour = true);

struct AlphaMinimum {
  double E_star = 0.0, k_star = 0.0, alpha_star = 0.0;
  /// d^2 alpha(E(k)) / dk^2 at k*, E(k) = k^2 / 2 + E_1(+inf).
  double alpha_kk = 0.0;
  /// d kappa / dk and d^2 kappa / dk^2 at k*.
  double kappa_star = 0.0, kappa_k = 0.0, kappa_kk = 0.0;
  double level1_plus = 0.0;
};

/// Grid bracketing then golden-section refinement over the density window.
/// Throws MinimumOnBoundary if E* lies within 1% of the window edge.
AlphaMinimum minimize_alpha(const HamiltonianFamily& electronic, const EnergyDensity& density,
                            bool include_contour = true);

/// Geometric factor exp(-i theta) from continuing the upper eigenvector once
/// around the crossing; for real symmetric h it is +-1.
Complex crossing_phase_factor(const HamiltonianFamily& electronic);

/// Per-energy data on a Gauss-Legendre grid over the density window.
struct EnergyGrid {
  double epsilon = 0.0;
  std::vector<double> energies, weights;
  std::vector<ChannelData> channels;
  std::vector<StationarySolution> solutions;
};

EnergyGrid solve_energy_grid(const HamiltonianFamily& electronic, const EnergyDensity& density, double epsilon,
                             int nodes, const StationaryOptions& options = {}, unsigned threads = 1);

struct PacketField {
  std::vector<double> x;
  /// Electronic components of psi(x, t).
  std::vector<Vector2> psi;
  /// Scalar amplitude along phi_j(+-inf) for channel-filtered fields.
  std::vector<Complex> scalar;
  double l2_norm = 0.0;
};

/// int_Delta Q Phi exp(-i t E / eps^2) dE on the grid. Points with
/// |x| > x_max use the free plane-wave forms; interior points need the
/// solutions to carry samples at exactly those x (otherwise InvalidParameter).
/// A single-channel filter also fills `scalar` with the component along the
/// asymptotic eigenvector of that channel.
PacketField synthesize_packet(const HamiltonianFamily& electronic, const EnergyDensity& density,
                              const EnergyGrid& grid, double t, const std::vector<double>& x_grid,
                              const ChannelFilter& filter = {});

/// synthesize_packet with the grid doubled as a convergence gate: throws
/// QuadratureUnderResolved if the L2 norm moves by more than 1%.
PacketField synthesize_packet_checked(const HamiltonianFamily& electronic, const EnergyDensity& density,
                                      double epsilon, double t, const std::vector<double>& x_grid,
                                      const ChannelFilter& filter = {}, int nodes = 64,
                                      const StationaryOptions& options = {}, unsigned threads = 1);

/// Free incoming packet psi_2^-(x, t) in channel 2 (scalar part).
std::vector<Complex> incoming_packet(const HamiltonianFamily& electronic, const EnergyDensity& density,
                                     double epsilon, double t, const std::vector<double>& x_grid, int nodes = 64);

/// Gaussian wave packet phi_0(A, B, h, a, eta, x) with Re(conj(B) A) = 1.
Complex gaussian_packet(Complex A, Complex B, double h, double a, double eta, double x);

struct PredictedPacket {
  double eta_plus = 0.0, a_plus = 0.0;
  Complex A_plus, B_plus;
  double S_plus = 0.0;
  /// Modulus of the prefactor (equals the L2 norm of the field).
  double amplitude = 0.0;
  /// Phase of the prefactor (geometric factor, P and kappa terms), diagnostic only.
  double phase = 0.0;
  std::vector<double> x;
  std::vector<Complex> field;
};

/// Leading-order transmitted channel-1 packet at time t. Throws
/// NormalizationViolation if |Re(conj(B) A) - 1| > 1e-10.
PredictedPacket predicted_transmitted_packet(const HamiltonianFamily& electronic, const EnergyDensity& density,
                                             const AlphaMinimum& minimum, double epsilon, double t,
                                             const std::vector<double>& x_grid);

/// ||a - e^{i phi} b|| / ||b|| minimised over the global phase phi, on a
/// uniform grid restricted to x > x_min.
double relative_l2_mismatch(const std::vector<double>& x, const std::vector<Complex>& a,
                            const std::vector<Complex>& b, double x_min = 0.0);

struct GaussianFit {
  double peak = 0.0, center = 0.0, width = 0.0;
  /// sup |data - fit| / peak
  double max_residual = 0.0;
};
/// Moment-initialised least-squares Gaussian fit of a non-negative profile.
GaussianFit fit_gaussian(const std::vector<double>& x, const std::vector<double>& y);

/// |psi|^2-weighted mean position on a uniform grid.
double packet_center(const std::vector<double>& x, const std::vector<Complex>& field);

}  // namespace nadlab
