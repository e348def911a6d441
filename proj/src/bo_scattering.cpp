#include "nadlab/bo_scattering.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numbers>
#include <sstream>
#include <thread>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/numeric/odeint.hpp>

#include "nadlab/asymptotics.hpp"
#include "nadlab/errors.hpp"

namespace nadlab {

namespace {

constexpr double kPi = std::numbers::pi;

// Channel levels and eigenvectors of a real symmetric h = c0 + X sx + Z sz.
// Index 0 is channel 1, index 1 channel 2. Families whose coupling X vanishes
// identically keep the diagonal basis, labelled by the ordering at -inf, so
// crossing levels stay on their own channel.
struct LevelPoint {
  std::array<double, 2> e{}, de{};
  std::array<Eigen::Vector2d, 2> phi;
  // d_{jl} = phi_j . phi_l'
  double d12 = 0.0, d21 = 0.0;
};

class Frame {
 public:
  explicit Frame(const HamiltonianFamily& f) : family_(f) {
    for (double x : {-7.0, -3.0, -1.0, -0.3, 0.0, 0.4, 1.1, 2.9, 6.5}) {
      const Pauli p = f.pauli(x);
      if (std::abs(p.cy) > 1e-12 || std::abs(p.c0.imag()) + std::abs(p.cx.imag()) + std::abs(p.cz.imag()) > 1e-12) {
        throw Error(ErrorCode::kInvalidParameter, "electronic Hamiltonian must be real symmetric");
      }
      if (std::abs(p.cx) > 0.0) diabatic_ = false;
    }
    if (diabatic_) {
      const Pauli m = limit_pauli(-1);
      upper_ = m.cz.real() >= 0.0 ? 0 : 1;  // diagonal entry c0 + Z is index 0
    }
  }

  Pauli limit_pauli(int side) const {
    if (auto lim = family_.limits()) return to_pauli(side < 0 ? lim->minus_infinity : lim->plus_infinity);
    return family_.pauli(side * 1e6);
  }

  LevelPoint from_values(double c0, double X, double Z, double dc0, double dX, double dZ) const {
    LevelPoint lp;
    if (diabatic_) {
      const std::array<double, 2> diag{c0 + Z, c0 - Z}, ddiag{dc0 + dZ, dc0 - dZ};
      const int up = upper_, lo = 1 - upper_;
      lp.e = {diag[lo], diag[up]};
      lp.de = {ddiag[lo], ddiag[up]};
      lp.phi[0] = Eigen::Vector2d::Unit(lo);
      lp.phi[1] = Eigen::Vector2d::Unit(up);
      return lp;
    }
    const double r2 = X * X + Z * Z;
    const double r = std::sqrt(r2);
    const double th = 0.5 * std::atan2(X, Z);
    const double dr = r > 0.0 ? (Z * dZ + X * dX) / r : 0.0;
    const double dth = r2 > 0.0 ? 0.5 * (Z * dX - X * dZ) / r2 : 0.0;
    lp.e = {c0 - r, c0 + r};
    lp.de = {dc0 - dr, dc0 + dr};
    lp.phi[1] = {std::cos(th), std::sin(th)};
    lp.phi[0] = {-std::sin(th), std::cos(th)};
    // phi_up' = th' phi_lo, phi_lo' = -th' phi_up
    lp.d12 = dth;
    lp.d21 = -dth;
    return lp;
  }

  LevelPoint at(double x) const {
    const PauliSeries j = family_.jet(x, 1);
    return from_values(j.c0[0].real(), j.cx[0].real(), j.cz[0].real(), j.c0[1].real(), j.cx[1].real(),
                       j.cz[1].real());
  }

  std::array<double, 2> levels(double x) const {
    const Pauli p = family_.pauli(x);
    return from_values(p.c0.real(), p.cx.real(), p.cz.real(), 0, 0, 0).e;
  }

  LevelPoint limit(int side) const {
    const Pauli p = limit_pauli(side);
    return from_values(p.c0.real(), p.cx.real(), p.cz.real(), 0, 0, 0);
  }

 private:
  const HamiltonianFamily& family_;
  bool diabatic_ = true;
  int upper_ = 0;
};

double momentum(double energy, double level) {
  const double d = 2.0 * (energy - level);
  if (!(d > 0.0)) {
    std::ostringstream os;
    os << "energy " << energy << " is below the level " << level;
    throw Error(ErrorCode::kEnergyOutsideWindow, os.str());
  }
  return std::sqrt(d);
}

using State = std::array<double, 10>;  // 4 complex coefficients, then int_0^x k_1, k_2

constexpr std::array<int, 4> kJ{0, 0, 1, 1};       // channel (0-based) of index m
constexpr std::array<int, 4> kSigma{-1, 1, -1, 1};  // sigma of index m

struct CoefficientSystem {
  const Frame& frame;
  double energy, eta;

  void operator()(const State& s, State& ds, double x) const {
    const LevelPoint lp = frame.at(x);
    std::array<double, 2> k{}, kp{};
    for (int j = 0; j < 2; ++j) {
      k[j] = momentum(energy, lp.e[j]);
      kp[j] = -lp.de[j] / k[j];
    }
    std::array<Complex, 4> c;
    std::array<double, 4> phase;
    for (int m = 0; m < 4; ++m) {
      c[m] = {s[2 * m], s[2 * m + 1]};
      phase[m] = kSigma[m] * s[8 + kJ[m]] / eta;
    }
    for (int m = 0; m < 4; ++m) {
      const int j = kJ[m];
      Complex acc{};
      for (int l = 0; l < 4; ++l) {
        const int jl = kJ[l];
        double coupling;
        if (jl == j) {
          if (kSigma[l] == kSigma[m]) continue;
          coupling = -kp[j] / (2.0 * k[j]);
        } else {
          const double d = j == 0 ? lp.d12 : lp.d21;
          coupling = 0.5 * std::sqrt(k[j] / k[jl]) * d * (1.0 + kSigma[m] * kSigma[l] * k[jl] / k[j]);
          if (coupling == 0.0) continue;
        }
        const double arg = -(phase[l] - phase[m]);
        acc += coupling * Complex{std::cos(arg), std::sin(arg)} * c[l];
      }
      ds[2 * m] = -acc.real();
      ds[2 * m + 1] = -acc.imag();
    }
    ds[8] = k[0];
    ds[9] = k[1];
  }
};

// int_0^x k_j for x < 0 (negative), by adaptive Gauss-Kronrod.
std::array<double, 2> phase_integrals(const Frame& frame, double energy, double x) {
  std::array<double, 2> out{};
  for (int j = 0; j < 2; ++j) {
    auto f = [&](double y) { return momentum(energy, frame.levels(y)[j]); };
    out[j] = -boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, x, 0.0, 15, 1e-14);
  }
  return out;
}

struct RawSolve {
  std::array<Complex, 4> c;
  std::vector<std::array<Complex, 4>> amp;
  std::vector<std::array<Eigen::Vector2d, 2>> phi;
  int steps = 0;
};

RawSolve integrate_window(const Frame& frame, double energy, double epsilon, double L, const StationaryOptions& o,
                          const std::vector<double>& samples) {
  namespace ode = boost::numeric::odeint;
  const double eta = epsilon * epsilon;
  const CoefficientSystem sys{frame, energy, eta};
  State s{};
  s[2 * channel_index(2, -1)] = 1.0;
  const auto k0 = phase_integrals(frame, energy, -L);
  s[8] = k0[0];
  s[9] = k0[1];

  std::vector<double> times{-L};
  times.insert(times.end(), samples.begin(), samples.end());
  times.push_back(L);

  RawSolve out;
  // Steps are capped at a fraction of the shortest beat period 2 pi eta / (k_1 + k_2);
  // without the cap the error estimator is fooled by aliased oscillations.
  const double max_dt = 0.5 * eta;
  auto stepper = ode::make_controlled(o.abs_tolerance, o.rel_tolerance, max_dt, ode::runge_kutta_fehlberg78<State>());
  std::size_t visit = 0;
  auto observer = [&](const State& st, double x) {
    const std::size_t i = visit++;
    if (i == 0 || i == times.size() - 1) return;
    const LevelPoint lp = frame.at(x);
    std::array<Complex, 4> a;
    for (int m = 0; m < 4; ++m) {
      const int j = kJ[m];
      const double k = momentum(energy, lp.e[j]);
      const double arg = -kSigma[m] * st[8 + j] / eta;
      a[m] = Complex{st[2 * m], st[2 * m + 1]} * Complex{std::cos(arg), std::sin(arg)} / std::sqrt(2.0 * k);
    }
    out.amp.push_back(a);
    out.phi.push_back(lp.phi);
  };
  // Initial step: a fraction of the fastest local wavelength.
  const double dt = 0.01 * eta;
  out.steps = static_cast<int>(ode::integrate_times(stepper, sys, s, times.begin(), times.end(), dt, observer));
  for (int m = 0; m < 4; ++m) out.c[m] = {s[2 * m], s[2 * m + 1]};
  return out;
}

}  // namespace

double upper_level_sup(const HamiltonianFamily& electronic) {
  const Frame frame(electronic);
  double sup = std::max(frame.limit(-1).e[1], frame.limit(1).e[1]);
  // Crossing families: either level may be the upper one somewhere.
  for (int i = 0; i <= 4000; ++i) {
    const auto e = frame.levels(-40.0 + 0.02 * i);
    sup = std::max({sup, e[0], e[1]});
  }
  return sup;
}

ChannelData channel_data(const HamiltonianFamily& electronic, double energy) {
  const double threshold = upper_level_sup(electronic);
  if (!(energy > threshold)) {
    std::ostringstream os;
    os << "energy " << energy << " must exceed sup E_2 = " << threshold;
    throw Error(ErrorCode::kEnergyOutsideWindow, os.str());
  }
  const Frame frame(electronic);
  ChannelData d;
  d.energy = energy;
  d.level_minus = frame.limit(-1).e;
  d.level_plus = frame.limit(1).e;
  boost::math::quadrature::exp_sinh<double> integrator;
  for (int j = 0; j < 2; ++j) {
    d.k_minus[j] = momentum(energy, d.level_minus[j]);
    d.k_plus[j] = momentum(energy, d.level_plus[j]);
    const double kp = d.k_plus[j], km = d.k_minus[j];
    auto fp = [&](double y) { return momentum(energy, frame.levels(y)[j]) - kp; };
    auto fm = [&](double y) { return momentum(energy, frame.levels(-y)[j]) - km; };
    d.omega_plus[j] = integrator.integrate(fp, 0.0, std::numeric_limits<double>::infinity(), 1e-14);
    d.omega_minus[j] = -integrator.integrate(fm, 0.0, std::numeric_limits<double>::infinity(), 1e-14);
  }
  return d;
}

Vector2 StationarySolution::phi(std::size_t i, const ChannelFilter& filter) const {
  Vector2 v = Vector2::Zero();
  for (int m = 0; m < 4; ++m) {
    if (!filter.keeps(kJ[m] + 1, kSigma[m])) continue;
    v += sample_amplitude[i][m] * sample_phi[i][kJ[m]].cast<Complex>();
  }
  return v;
}

StationarySolution solve_stationary(const HamiltonianFamily& electronic, double energy, double epsilon,
                                    const StationaryOptions& options) {
  if (!(epsilon > 0.0)) throw Error(ErrorCode::kInvalidParameter, "epsilon must be positive");
  if (!(options.x_max > 0.0)) throw Error(ErrorCode::kInvalidParameter, "x_max must be positive");
  const double threshold = upper_level_sup(electronic);
  if (!(energy > threshold)) {
    std::ostringstream os;
    os << "energy " << energy << " must exceed sup E_2 = " << threshold;
    throw Error(ErrorCode::kEnergyOutsideWindow, os.str());
  }
  std::vector<double> samples = options.sample_x;
  std::sort(samples.begin(), samples.end());
  samples.erase(std::unique(samples.begin(), samples.end()), samples.end());
  for (double x : samples) {
    if (!(std::abs(x) < options.x_max)) throw Error(ErrorCode::kInvalidParameter, "sample point outside (-x_max, x_max)");
  }

  const Frame frame(electronic);
  const RawSolve r = integrate_window(frame, energy, epsilon, options.x_max, options, samples);
  StationarySolution out;
  out.energy = energy;
  out.epsilon = epsilon;
  out.x_max = options.x_max;
  out.coefficients = r.c;
  out.steps = r.steps;
  out.sample_x = samples;
  out.sample_amplitude = r.amp;
  out.sample_phi = r.phi;
  double current = 0.0;
  for (int m = 0; m < 4; ++m) current -= kSigma[m] * std::norm(r.c[m]);
  out.flux_defect = std::abs(current - 1.0);

  if (options.check_window) {
    const RawSolve wide = integrate_window(frame, energy, epsilon, 1.25 * options.x_max, options, {});
    for (int m = 0; m < 4; ++m) out.window_drift = std::max(out.window_drift, std::abs(wide.c[m] - r.c[m]));
    if (out.window_drift > options.drift_tolerance) {
      std::ostringstream os;
      os << "coefficients drift by " << out.window_drift << " between x_max = " << options.x_max << " and "
         << 1.25 * options.x_max << " (E = " << energy << ", eps = " << epsilon << ")";
      throw Error(ErrorCode::kWindowTooSmall, os.str());
    }
  }
  return out;
}

LogSlope transmitted_log_slope(const HamiltonianFamily& electronic, double energy, const std::vector<double>& epsilons,
                               const StationaryOptions& options) {
  LogSlope out;
  std::vector<std::pair<double, double>> points;
  for (double eps : epsilons) {
    const StationarySolution s = solve_stationary(electronic, energy, eps, options);
    const double a = std::abs(s.c(1, -1));
    out.epsilons.push_back(eps);
    out.amplitudes.push_back(a);
    out.flux_defects.push_back(s.flux_defect);
    if (a >= 1e-10) points.emplace_back(eps * eps, a);
  }
  if (points.size() < 4) throw Error(ErrorCode::kInsufficientData, "log slope needs >= 4 amplitudes above 1e-10");
  // ln A = ln G - gamma / eps^2: the exponential fit in the variable eps^2.
  ExponentialFitOptions fo;
  fo.amplitude_floor = 0.0;
  fo.discard_largest_on_drift = false;
  const ExponentialFit fit = fit_exponential(points, fo);
  out.slope_vs_inv_eps2 = -fit.gamma;
  out.intercept = std::log(fit.G);
  out.fit_quality = fit.r_squared;
  return out;
}

Complex EnergyDensity::Q(double E, double epsilon) const {
  const double eta = epsilon * epsilon;
  const double ph = -J(E) / eta;
  return std::exp(-G(E) / eta) * Complex{std::cos(ph), std::sin(ph)} * P(E, epsilon);
}

CrossingIntegral crossing_integral(const HamiltonianFamily& electronic, double energy) {
  const GapFunction gap = electronic.gap_function();
  CrossingIntegral out;
  out.z0 = find_complex_zero(gap);
  const double radius = std::min(0.5, 0.5 * out.z0.imag());
  const ContourPath path = loop_around(out.z0, radius);
  const auto rho2 = gap.rho_squared;
  const HamiltonianFamily* fam = &electronic;
  const double rho_start = std::sqrt(rho2(path.start()).real());
  const double k_start = momentum(energy, fam->pauli(path.start()).c0.real() + 0.5 * rho_start);
  auto factory = [=] {
    auto rho = sqrt_continuation(rho2, Complex{rho_start, 0.0});
    // E_2 = c0 + rho / 2 along the tracked rho, then k_2 on its own sheet.
    auto k2 = sqrt_continuation(
        [=](Complex z) { return 2.0 * (energy - fam->pauli(z).c0 - 0.5 * rho(z)); }, Complex{k_start, 0.0});
    return k2;
  };
  const ContourResult r = integrate(path, factory);
  out.value = r.value.imag() < 0.0 ? -r.value : r.value;
  out.error_estimate = r.error_estimate;
  return out;
}

AlphaKappa alpha_kappa(const HamiltonianFamily& electronic, const EnergyDensity& density, double energy,
                       bool include_contour) {
  AlphaKappa out;
  const ChannelData ch = channel_data(electronic, energy);
  out.omega1_plus = ch.omega_plus[0];
  Complex loop{};
  if (include_contour) {
    const CrossingIntegral ci = crossing_integral(electronic, energy);
    loop = ci.value;
    out.z0 = ci.z0;
  }
  out.contour_term = loop.imag();
  out.alpha = density.G(energy) + loop.imag();
  out.kappa = density.J(energy) - loop.real() - out.omega1_plus;
  return out;
}

AlphaMinimum minimize_alpha(const HamiltonianFamily& electronic, const EnergyDensity& density, bool include_contour) {
  const double a = density.E_min, b = density.E_max;
  if (!(b > a)) throw Error(ErrorCode::kInvalidParameter, "empty energy window");
  auto alpha = [&](double E) { return alpha_kappa(electronic, density, E, include_contour).alpha; };
  constexpr int kGrid = 40;
  int best = 0;
  double best_val = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= kGrid; ++i) {
    const double v = alpha(a + (b - a) * i / kGrid);
    if (v < best_val) {
      best_val = v;
      best = i;
    }
  }
  double lo = a + (b - a) * std::max(0, best - 1) / kGrid;
  double hi = a + (b - a) * std::min(kGrid, best + 1) / kGrid;
  const double inv_phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = hi - inv_phi * (hi - lo), x2 = lo + inv_phi * (hi - lo);
  double f1 = alpha(x1), f2 = alpha(x2);
  while (hi - lo > 1e-9) {
    if (f1 < f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - inv_phi * (hi - lo);
      f1 = alpha(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + inv_phi * (hi - lo);
      f2 = alpha(x2);
    }
  }
  AlphaMinimum out;
  out.E_star = 0.5 * (lo + hi);
  if (out.E_star - a < 0.01 * (b - a) || b - out.E_star < 0.01 * (b - a)) {
    std::ostringstream os;
    os << "alpha minimum at E = " << out.E_star << " is on the edge of [" << a << ", " << b << "]";
    throw Error(ErrorCode::kMinimumOnBoundary, os.str());
  }
  const ChannelData ch = channel_data(electronic, out.E_star);
  out.level1_plus = ch.level_plus[0];
  out.k_star = ch.k_plus[0];
  // Derivatives in k with E(k) = k^2 / 2 + E_1(+inf).
  auto at_k = [&](double k) { return alpha_kappa(electronic, density, 0.5 * k * k + out.level1_plus, include_contour); };
  const double h = 2e-3;
  const AlphaKappa m = at_k(out.k_star - h), z = at_k(out.k_star), p = at_k(out.k_star + h);
  out.alpha_star = z.alpha;
  out.kappa_star = z.kappa;
  out.alpha_kk = (p.alpha - 2.0 * z.alpha + m.alpha) / (h * h);
  out.kappa_k = (p.kappa - m.kappa) / (2.0 * h);
  out.kappa_kk = (p.kappa - 2.0 * z.kappa + m.kappa) / (h * h);
  return out;
}

Complex crossing_phase_factor(const HamiltonianFamily& electronic) {
  const GapFunction gap = electronic.gap_function();
  const Complex z0 = find_complex_zero(gap);
  const ContourPath path = loop_around(z0, std::min(0.5, 0.5 * z0.imag()));
  // Continue r = sqrt(X^2 + Z^2) and cos(theta) = sqrt((1 + Z / r) / 2); the
  // upper eigenvector is (cos theta, sin theta) with sin theta = X / (2 r cos theta).
  const Pauli p0 = electronic.pauli(path.start());
  const double r0 = std::hypot(p0.cx.real(), p0.cz.real());
  const double th0 = 0.5 * std::atan2(p0.cx.real(), p0.cz.real());
  Complex X, Z, r;
  auto rc = sqrt_continuation([&](Complex) { return X * X + Z * Z; }, Complex{r0, 0.0});
  auto cc = sqrt_continuation([&](Complex) { return 0.5 * (1.0 + Z / r); }, Complex{std::cos(th0), 0.0});
  Complex cos_t, sin_t;
  for (const PathPiece& piece : path.pieces()) {
    constexpr int kSteps = 4000;
    for (int i = 0; i <= kSteps; ++i) {
      const Complex z = piece.point(static_cast<double>(i) / kSteps);
      const Pauli p = electronic.pauli(z);
      X = p.cx;
      Z = p.cz;
      r = rc(z);
      cos_t = cc(z);
      sin_t = X / (2.0 * r * cos_t);
    }
  }
  // Overlap of the continued upper vector with the lower one at the base point.
  return -std::sin(th0) * cos_t + std::cos(th0) * sin_t;
}

EnergyGrid solve_energy_grid(const HamiltonianFamily& electronic, const EnergyDensity& density, double epsilon,
                             int nodes, const StationaryOptions& options, unsigned threads) {
  const GaussRule& rule = gauss_legendre(nodes);
  EnergyGrid grid;
  grid.epsilon = epsilon;
  const double mid = 0.5 * (density.E_min + density.E_max), half = 0.5 * (density.E_max - density.E_min);
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    grid.energies.push_back(mid + half * rule.nodes[i]);
    grid.weights.push_back(half * rule.weights[i]);
  }
  const std::size_t n = grid.energies.size();
  grid.channels.resize(n);
  grid.solutions.resize(n);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        grid.channels[i] = channel_data(electronic, grid.energies[i]);
        grid.solutions[i] = solve_stationary(electronic, grid.energies[i], epsilon, options);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const unsigned nt = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n)));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < nt; ++t) pool.emplace_back(work);
  work();
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
  return grid;
}

namespace {

double trapezoid_norm(const std::vector<double>& x, const std::vector<double>& w2) {
  double s = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i) s += 0.5 * (w2[i] + w2[i - 1]) * (x[i] - x[i - 1]);
  return std::sqrt(s);
}

}  // namespace

PacketField synthesize_packet(const HamiltonianFamily& electronic, const EnergyDensity& density, const EnergyGrid& grid,
                              double t, const std::vector<double>& x_grid, const ChannelFilter& filter) {
  const Frame frame(electronic);
  const LevelPoint minus = frame.limit(-1), plus = frame.limit(1);
  const double eta = grid.epsilon * grid.epsilon;
  PacketField out;
  out.x = x_grid;
  out.psi.assign(x_grid.size(), Vector2::Zero());
  const bool scalar = filter.channel.has_value();
  if (scalar) out.scalar.assign(x_grid.size(), Complex{});

  for (std::size_t e = 0; e < grid.energies.size(); ++e) {
    const double E = grid.energies[e];
    const ChannelData& ch = grid.channels[e];
    const StationarySolution& sol = grid.solutions[e];
    const double tph = -t * E / eta;
    const Complex weight = grid.weights[e] * density.Q(E, grid.epsilon) * Complex{std::cos(tph), std::sin(tph)};
    for (std::size_t i = 0; i < x_grid.size(); ++i) {
      const double x = x_grid[i];
      std::array<Complex, 4> amp{};
      const std::array<Eigen::Vector2d, 2>* phi = nullptr;
      if (std::abs(x) < sol.x_max) {
        const auto it = std::lower_bound(sol.sample_x.begin(), sol.sample_x.end(), x);
        if (it == sol.sample_x.end() || *it != x) {
          throw Error(ErrorCode::kInvalidParameter, "interior point was not sampled by the stationary solve");
        }
        const auto idx = static_cast<std::size_t>(it - sol.sample_x.begin());
        amp = sol.sample_amplitude[idx];
        phi = &sol.sample_phi[idx];
      } else {
        // Free plane waves: c(+inf) on the right, the incoming wave on the left.
        const bool right = x > 0.0;
        for (int m = 0; m < 4; ++m) {
          const int j = kJ[m];
          const Complex c = right ? sol.coefficients[m] : (m == channel_index(2, -1) ? Complex{1.0} : Complex{});
          if (c == Complex{}) continue;
          const double k = right ? ch.k_plus[j] : ch.k_minus[j];
          const double om = right ? ch.omega_plus[j] : ch.omega_minus[j];
          const double arg = -kSigma[m] * (x * k + om) / eta;
          amp[m] = c * Complex{std::cos(arg), std::sin(arg)} / std::sqrt(2.0 * k);
        }
        phi = right ? &plus.phi : &minus.phi;
      }
      for (int m = 0; m < 4; ++m) {
        if (!filter.keeps(kJ[m] + 1, kSigma[m]) || amp[m] == Complex{}) continue;
        const Complex a = weight * amp[m];
        out.psi[i] += a * (*phi)[kJ[m]].cast<Complex>();
        if (scalar) out.scalar[i] += a;
      }
    }
  }
  std::vector<double> w2(x_grid.size());
  for (std::size_t i = 0; i < x_grid.size(); ++i) w2[i] = out.psi[i].squaredNorm();
  out.l2_norm = trapezoid_norm(x_grid, w2);
  return out;
}

PacketField synthesize_packet_checked(const HamiltonianFamily& electronic, const EnergyDensity& density, double epsilon,
                                      double t, const std::vector<double>& x_grid, const ChannelFilter& filter,
                                      int nodes, const StationaryOptions& options, unsigned threads) {
  StationaryOptions o = options;
  o.sample_x.clear();
  for (double x : x_grid) {
    if (std::abs(x) < o.x_max) o.sample_x.push_back(x);
  }
  const EnergyGrid coarse = solve_energy_grid(electronic, density, epsilon, nodes, o, threads);
  const EnergyGrid fine = solve_energy_grid(electronic, density, epsilon, 2 * nodes, o, threads);
  const PacketField a = synthesize_packet(electronic, density, coarse, t, x_grid, filter);
  PacketField b = synthesize_packet(electronic, density, fine, t, x_grid, filter);
  const double change = std::abs(a.l2_norm - b.l2_norm) / std::max(b.l2_norm, std::numeric_limits<double>::min());
  if (change > 0.01) {
    std::ostringstream os;
    os << "doubling the energy grid (" << nodes << " nodes) changes the packet norm by " << 100.0 * change << "%";
    throw Error(ErrorCode::kQuadratureUnderResolved, os.str());
  }
  return b;
}

std::vector<Complex> incoming_packet(const HamiltonianFamily& electronic, const EnergyDensity& density, double epsilon,
                                     double t, const std::vector<double>& x_grid, int nodes) {
  const GaussRule& rule = gauss_legendre(nodes);
  const double eta = epsilon * epsilon;
  const double mid = 0.5 * (density.E_min + density.E_max), half = 0.5 * (density.E_max - density.E_min);
  std::vector<Complex> out(x_grid.size());
  for (std::size_t n = 0; n < rule.nodes.size(); ++n) {
    const double E = mid + half * rule.nodes[n];
    const ChannelData ch = channel_data(electronic, E);
    const double k = ch.k_minus[1], om = ch.omega_minus[1];
    const double tph = -t * E / eta;
    const Complex w =
        half * rule.weights[n] * density.Q(E, epsilon) * Complex{std::cos(tph), std::sin(tph)} / std::sqrt(2.0 * k);
    for (std::size_t i = 0; i < x_grid.size(); ++i) {
      const double arg = (x_grid[i] * k + om) / eta;
      out[i] += w * Complex{std::cos(arg), std::sin(arg)};
    }
  }
  return out;
}

Complex gaussian_packet(Complex A, Complex B, double h, double a, double eta, double x) {
  const double d = x - a;
  const Complex expo = -B * d * d / (2.0 * A * h) + Complex{0.0, eta * d / h};
  return std::exp(expo) / (std::pow(kPi, 0.25) * std::pow(h, 0.25) * std::sqrt(A));
}

PredictedPacket predicted_transmitted_packet(const HamiltonianFamily& electronic, const EnergyDensity& density,
                                             const AlphaMinimum& mn, double epsilon, double t,
                                             const std::vector<double>& x_grid) {
  if (!(mn.alpha_kk > 0.0)) throw Error(ErrorCode::kInvalidParameter, "alpha must be convex in k at the minimum");
  const double eta = epsilon * epsilon;
  PredictedPacket out;
  out.eta_plus = mn.k_star;
  out.a_plus = mn.kappa_k + mn.k_star * t;
  out.B_plus = 1.0 / std::sqrt(mn.alpha_kk);
  out.A_plus = out.B_plus * Complex{mn.alpha_kk, mn.kappa_kk + t};
  out.S_plus = (0.5 * mn.k_star * mn.k_star - mn.level1_plus) * t;
  const double norm_check = (std::conj(out.B_plus) * out.A_plus).real();
  if (std::abs(norm_check - 1.0) > 1e-10) {
    std::ostringstream os;
    os << "Re(conj(B) A) = " << norm_check;
    throw Error(ErrorCode::kNormalizationViolation, os.str());
  }
  const Complex P = density.P(mn.E_star, epsilon);
  out.amplitude = std::pow(epsilon, 1.5) * std::pow(kPi, 0.75) * std::exp(-mn.alpha_star / eta) /
                  std::pow(mn.alpha_kk, 0.25) * std::abs(P) * std::sqrt(mn.k_star);
  const Complex geometric = crossing_phase_factor(electronic);
  out.phase = std::arg(geometric) + std::arg(P) - (mn.kappa_star - mn.k_star * mn.kappa_k) / eta;
  const Complex pre = out.amplitude * Complex{std::cos(out.phase), std::sin(out.phase)};
  const Complex s_phase{std::cos(out.S_plus / eta), std::sin(out.S_plus / eta)};
  out.x = x_grid;
  out.field.reserve(x_grid.size());
  for (double x : x_grid) {
    out.field.push_back(pre * s_phase * gaussian_packet(out.A_plus, out.B_plus, eta, out.a_plus, out.eta_plus, x));
  }
  return out;
}

double relative_l2_mismatch(const std::vector<double>& x, const std::vector<Complex>& a, const std::vector<Complex>& b,
                            double x_min) {
  if (a.size() != x.size() || b.size() != x.size()) throw Error(ErrorCode::kInvalidParameter, "field size mismatch");
  Complex overlap{};
  double nb = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] <= x_min) continue;
    overlap += std::conj(b[i]) * a[i];
    nb += std::norm(b[i]);
  }
  if (!(nb > 0.0)) throw Error(ErrorCode::kInvalidParameter, "reference field vanishes on the region");
  const Complex rot = std::polar(1.0, std::arg(overlap));
  double diff = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] > x_min) diff += std::norm(a[i] - rot * b[i]);
  }
  return std::sqrt(diff / nb);
}

double packet_center(const std::vector<double>& x, const std::vector<Complex>& field) {
  double m0 = 0.0, m1 = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    m0 += std::norm(field[i]);
    m1 += x[i] * std::norm(field[i]);
  }
  if (!(m0 > 0.0)) throw Error(ErrorCode::kInvalidParameter, "field vanishes");
  return m1 / m0;
}

GaussianFit fit_gaussian(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 4) throw Error(ErrorCode::kInsufficientData, "gaussian fit needs >= 4 points");
  double m0 = 0.0, m1 = 0.0, m2 = 0.0, peak = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    m0 += y[i];
    m1 += x[i] * y[i];
    peak = std::max(peak, y[i]);
  }
  if (!(m0 > 0.0)) throw Error(ErrorCode::kFitDiverged, "profile vanishes");
  const double mean = m1 / m0;
  for (std::size_t i = 0; i < x.size(); ++i) m2 += (x[i] - mean) * (x[i] - mean) * y[i];
  Eigen::Vector3d p{peak, mean, std::sqrt(m2 / m0)};

  auto residuals = [&](const Eigen::Vector3d& q, Eigen::VectorXd& r, Eigen::MatrixXd* jac) {
    const auto n = static_cast<Eigen::Index>(x.size());
    r.resize(n);
    if (jac) jac->resize(n, 3);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double u = (x[static_cast<std::size_t>(i)] - q[1]) / q[2];
      const double g = std::exp(-0.5 * u * u);
      r[i] = q[0] * g - y[static_cast<std::size_t>(i)];
      if (jac) {
        (*jac)(i, 0) = g;
        (*jac)(i, 1) = q[0] * g * u / q[2];
        (*jac)(i, 2) = q[0] * g * u * u / q[2];
      }
    }
  };
  Eigen::VectorXd r;
  Eigen::MatrixXd jac;
  double lambda = 1e-3;
  residuals(p, r, &jac);
  double cost = r.squaredNorm();
  for (int it = 0; it < 200; ++it) {
    const Eigen::Matrix3d jtj = jac.transpose() * jac;
    Eigen::Matrix3d damped = jtj;
    damped.diagonal() *= 1.0 + lambda;
    const Eigen::Vector3d step = damped.ldlt().solve(-jac.transpose() * r);
    Eigen::Vector3d trial = p + step;
    trial[2] = std::abs(trial[2]);
    Eigen::VectorXd rt;
    residuals(trial, rt, nullptr);
    if (rt.squaredNorm() < cost) {
      p = trial;
      const double old = cost;
      residuals(p, r, &jac);
      cost = r.squaredNorm();
      lambda *= 0.3;
      if (old - cost <= 1e-15 * old) break;
    } else {
      lambda *= 10.0;
      if (lambda > 1e12) break;
    }
  }
  GaussianFit out{p[0], p[1], p[2], 0.0};
  out.max_residual = peak > 0.0 ? r.cwiseAbs().maxCoeff() / peak : 0.0;
  return out;
}

}  // namespace nadlab
