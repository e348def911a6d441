#include "nadlab/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iomanip>
#include <limits>
#include <mutex>
#include <numbers>
#include <set>
#include <sstream>
#include <thread>

#include <openssl/evp.h>

#include "nadlab/asymptotics.hpp"
#include "nadlab/bo_scattering.hpp"
#include "nadlab/errors.hpp"
#include "nadlab/propagator.hpp"
#include "nadlab/superadiabatic.hpp"

#ifndef NADLAB_VERSION
#define NADLAB_VERSION "unknown"
#endif

namespace nadlab {

using nlohmann::json;

namespace {

constexpr std::pair<ExperimentKind, std::string_view> kNames[] = {
    {ExperimentKind::kLzSweep, "lz-sweep"},
    {ExperimentKind::kErfProfile, "erf-profile"},
    {ExperimentKind::kSuperadiabaticScan, "superadiabatic-scan"},
    {ExperimentKind::kDecayRate, "decay-rate"},
    {ExperimentKind::kBoTransmit, "bo-transmit"},
    {ExperimentKind::kBoPacket, "bo-packet"},
};

[[noreturn]] void config_error(const std::string& what) { throw Error(ErrorCode::kConfigInvalid, what); }

// Re-raise a module error with the sweep coordinates that produced it.
[[noreturn]] void rethrow_with(const Error& e, const std::string& where) {
  std::string msg = e.what();
  const auto colon = msg.find(": ");
  if (colon != std::string::npos) msg = msg.substr(colon + 2);
  throw Error(e.code(), msg + " [" + where + "]");
}

std::string coords(const ExperimentConfig& c, double eps, std::optional<double> energy = std::nullopt) {
  std::ostringstream os;
  os << "family=" << c.family.name << "(delta=" << c.family.delta << "), eps=" << eps;
  if (energy) os << ", E=" << *energy;
  return os.str();
}

std::vector<double> uniform_grid(double a, double b, double step) {
  const auto n = static_cast<long>(std::llround((b - a) / step));
  std::vector<double> g;
  g.reserve(static_cast<std::size_t>(n) + 1);
  for (long i = 0; i <= n; ++i) g.push_back(i == n ? b : a + static_cast<double>(i) * step);
  return g;
}

double threshold(const ExperimentConfig& c, const std::string& name, double fallback) {
  const auto it = c.gates.find(name);
  return it == c.gates.end() ? fallback : it->second;
}

Gate gate_le(const std::string& name, double value, double limit, const std::string& what) {
  return {name, value, limit, value <= limit, what};
}

Gate gate_ge(const std::string& name, double value, double limit, const std::string& what) {
  return {name, value, limit, value >= limit, what};
}

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

// Least-squares slope of y against x.
double slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

StepControl step_control(const ExperimentConfig& c) {
  StepControl sc;
  sc.tolerance_per_unit_time = c.tolerance;
  return sc;
}

// Endpoint transition amplitude read out in the optimal superadiabatic basis.
struct Readout {
  int q_star = 0;
  double amplitude = 0.0;
  double instantaneous = 0.0;
  TransitionHistory history;
  TransitionHistory history_instantaneous;
};

Readout superadiabatic_readout(const HamiltonianFamily& f, const ExperimentConfig& c, double eps) {
  const std::vector<double> grid = uniform_grid(c.t_start, c.t_end, c.t_step);
  HierarchyOptions ho;
  ho.truncate_on_gap_closure = true;
  const ProjectorHierarchy h = build_hierarchy(f, eps, grid, c.q_max, ho);
  Readout r;
  r.q_star = h.q_star;
  r.history = transition_history(f, h, r.q_star, step_control(c));
  r.history_instantaneous = transition_history(f, h, 0, step_control(c));
  r.amplitude = r.history.coefficients.back();
  r.instantaneous = r.history_instantaneous.coefficients.back();
  return r;
}

// ---------------------------------------------------------------- lz-sweep

ExperimentResult run_lz_sweep(const ExperimentConfig& c, unsigned threads) {
  const FamilyPtr f = make_family(c.family);
  const bool zener_family = c.family.name == "zener";
  double gamma_expected = 0.0;
  if (zener_family) {
    gamma_expected = std::numbers::pi * c.family.delta * c.family.delta / 4.0;
  } else if (c.family.name == "constant_gap") {
    gamma_expected = c.family.delta;  // the gap never closes; gamma is Im t at the natural-time singularity
  } else {
    try {
      gamma_expected = decay_rate(f->gap_function(), c.contour_radius).gamma;
    } catch (const Error& e) {
      rethrow_with(e, "family=" + c.family.name);
    }
  }
  const std::size_t n = c.epsilon_grid.size();
  std::vector<Readout> out(n);
  parallel_for(n, threads, [&](std::size_t i) {
    const double eps = c.epsilon_grid[i];
    try {
      out[i] = superadiabatic_readout(*f, c, eps);
    } catch (const Error& e) {
      rethrow_with(e, coords(c, eps));
    }
  });

  ExperimentResult res;
  Table t{"amplitudes", {"epsilon", "q_star", "measured_amplitude", "instantaneous_amplitude", "lz_prediction", "ratio"}, {}};
  std::vector<std::pair<double, double>> pts;
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double eps = c.epsilon_grid[i];
    const double p = zener_family ? lz_amplitude(c.family.delta, eps)
                                  : c.prediction_prefactor * std::exp(-gamma_expected / eps);
    const double ratio = out[i].amplitude / p;
    worst = std::max(worst, std::abs(ratio - 1.0));
    t.rows.push_back({eps, static_cast<double>(out[i].q_star), out[i].amplitude, out[i].instantaneous, p, ratio});
    pts.emplace_back(eps, out[i].amplitude);
    if (p < c.amplitude_floor) {
      res.warnings.push_back("predicted amplitude at eps=" + std::to_string(eps) + " is below the amplitude floor");
    }
  }
  res.tables.push_back(t);
  res.gates.push_back(gate_le("ratio", worst, threshold(c, "ratio", 0.1),
                              "max |measured / predicted - 1| over the epsilon grid"));
  ExponentialFitOptions fo;
  fo.amplitude_floor = c.amplitude_floor;
  const ExponentialFit fit = fit_exponential(pts, fo);
  const double G_expected = zener_family ? 1.0 : c.prediction_prefactor;
  res.tables.push_back(Table{"fit",
                             {"G", "gamma", "r_squared", "G_expected", "gamma_expected", "points_used"},
                             {{fit.G, fit.gamma, fit.r_squared, G_expected, gamma_expected,
                               static_cast<double>(fit.epsilons_used.size())}}});
  res.gates.push_back(gate_le("gamma", rel(fit.gamma, gamma_expected), threshold(c, "gamma", 0.03),
                              "relative error of the fitted decay rate"));
  res.gates.push_back(gate_le("G", rel(fit.G, G_expected), threshold(c, "G", 0.15),
                              "relative error of the fitted prefactor"));
  res.convergence_table = "amplitudes";
  res.convergence_columns = {"measured_amplitude"};
  return res;
}

// ------------------------------------------------------------- erf-profile

ExperimentResult run_erf_profile(const ExperimentConfig& c, unsigned threads) {
  const FamilyPtr f = make_family(c.family);
  const std::size_t n = c.epsilon_grid.size();
  std::vector<Readout> out(n);
  std::vector<ErfFit> fits(n);
  parallel_for(n, threads, [&](std::size_t i) {
    const double eps = c.epsilon_grid[i];
    try {
      out[i] = superadiabatic_readout(*f, c, eps);
      fits[i] = erf_profile_fit(out[i].history, c.family.delta, eps);
    } catch (const Error& e) {
      rethrow_with(e, coords(c, eps));
    }
  });
  ExperimentResult res;
  Table summary{"summary",
                {"epsilon", "q_star", "final_amplitude", "fit_amplitude", "fit_center", "fit_width", "width_expected",
                 "max_residual", "instantaneous_max", "excursion_ratio"},
                {}};
  double worst_res = 0.0, worst_width = 0.0, min_excursion = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const double eps = c.epsilon_grid[i];
    const Readout& r = out[i];
    const ErfFit& fit = fits[i];
    const double w_exp = std::sqrt(2.0 * c.family.delta * eps);
    const double inst_max =
        *std::max_element(r.history_instantaneous.coefficients.begin(), r.history_instantaneous.coefficients.end());
    const double excursion = inst_max / r.amplitude;
    Table profile{"profile_eps" + std::to_string(i), {"t", "c2_superadiabatic", "erf_model", "residual", "c2_instantaneous"}, {}};
    for (std::size_t k = 0; k < r.history.times.size(); ++k) {
      const double t = r.history.times[k];
      const double model = fit.amplitude * erf_switch((t - fit.center) / fit.width);
      profile.rows.push_back({t, r.history.coefficients[k], model, (r.history.coefficients[k] - model) / fit.amplitude,
                              r.history_instantaneous.coefficients[k]});
    }
    res.tables.push_back(std::move(profile));
    summary.rows.push_back({eps, static_cast<double>(r.q_star), r.amplitude, fit.amplitude, fit.center, fit.width,
                            w_exp, fit.max_residual, inst_max, excursion});
    worst_res = std::max(worst_res, fit.max_residual);
    worst_width = std::max(worst_width, rel(fit.width, w_exp));
    min_excursion = std::min(min_excursion, excursion);
  }
  res.tables.insert(res.tables.begin(), summary);
  res.gates.push_back(gate_le("residual", worst_res, threshold(c, "residual", 0.05),
                              "sup |profile - erf model| / final amplitude"));
  res.gates.push_back(gate_le("width", worst_width, threshold(c, "width", 0.15),
                              "relative error of the fitted width against sqrt(2 delta eps)"));
  res.gates.push_back(gate_ge("excursion", min_excursion, threshold(c, "excursion", 5.0),
                              "instantaneous-basis maximum / final amplitude"));
  res.convergence_table = "summary";
  res.convergence_columns = {"final_amplitude"};
  return res;
}

// ---------------------------------------------------- superadiabatic-scan

ExperimentResult run_superadiabatic_scan(const ExperimentConfig& c, unsigned threads) {
  const FamilyPtr f = make_family(c.family);
  const std::size_t ne = c.epsilon_grid.size(), nq = c.q_values.size();
  std::vector<double> full(ne * nq), off(ne * nq);
  parallel_for(ne * nq, threads, [&](std::size_t idx) {
    const double eps = c.epsilon_grid[idx / nq];
    const int q = c.q_values[idx % nq];
    try {
      EvolutionSpec s;
      s.epsilon = eps;
      s.t_start = c.t_start;
      s.t_end = c.t_end;
      s.step_control = step_control(c);
      const Matrix2 u = evolve_u(*f, s).u_matrix;
      const Matrix2 v = evolve_vq(*f, s, q).u_matrix;
      full[idx] = operator_norm(u - v);
      // Off-diagonal blocks of V^dagger U relative to P_q(t_start).
      const Matrix2 p = superadiabatic_projector(*f, eps, c.t_start, q);
      const Matrix2 w = v.adjoint() * u;
      const Matrix2 id = Matrix2::Identity();
      off[idx] = operator_norm(p * w * (id - p) + (id - p) * w * p);
    } catch (const Error& e) {
      rethrow_with(e, coords(c, eps) + ", q=" + std::to_string(q));
    }
  });

  ExperimentResult res;
  Table norms{"norms", {"epsilon", "q", "full_norm", "off_block_norm"}, {}};
  for (std::size_t i = 0; i < ne * nq; ++i) {
    norms.rows.push_back({c.epsilon_grid[i / nq], static_cast<double>(c.q_values[i % nq]), full[i], off[i]});
  }
  Table slopes{"slopes", {"q", "full_slope", "off_block_slope", "expected"}, {}};
  std::vector<double> le;
  for (double e : c.epsilon_grid) le.push_back(std::log(e));
  for (std::size_t j = 0; j < nq; ++j) {
    std::vector<double> lf, lo;
    for (std::size_t i = 0; i < ne; ++i) {
      lf.push_back(std::log(full[i * nq + j]));
      lo.push_back(std::log(off[i * nq + j]));
    }
    const double q = c.q_values[j];
    const double sf = ne >= 2 ? slope(le, lf) : std::nan(""), so = ne >= 2 ? slope(le, lo) : std::nan("");
    slopes.rows.push_back({q, sf, so, q + 1.0});
    res.gates.push_back(gate_le("slope_q" + std::to_string(c.q_values[j]), std::abs(sf - (q + 1.0)),
                                threshold(c, "slope", 0.2), "|log-log slope of ||U - V_q|| - (q + 1)|"));
  }
  res.tables.push_back(norms);
  res.tables.push_back(slopes);

  // Error proxy of the projector hierarchy on a long grid.
  HierarchyOptions ho;
  ho.truncate_on_gap_closure = true;
  ho.threads = threads;
  ProjectorHierarchy h;
  try {
    h = build_hierarchy(*f, c.proxy_epsilon, uniform_grid(c.proxy_t_start, c.proxy_t_end, c.proxy_t_step),
                        c.proxy_q_max, ho);
  } catch (const Error& e) {
    rethrow_with(e, coords(c, c.proxy_epsilon));
  }
  Table proxy{"proxy", {"q", "beta", "error_proxy", "p_deviation"}, {}};
  for (int q = 0; q <= h.q_max(); ++q) {
    const auto k = static_cast<std::size_t>(q);
    proxy.rows.push_back({static_cast<double>(q), h.beta_estimates[k], h.error_proxy[k], h.p_deviation[k]});
  }
  res.tables.push_back(proxy);
  double min_second = std::numeric_limits<double>::infinity(), min_first = min_second;
  for (int q = 3; q + 2 <= h.q_max(); ++q) {
    const auto k = static_cast<std::size_t>(q);
    const double l0 = std::log(h.beta_estimates[k]), l1 = std::log(h.beta_estimates[k + 1]),
                 l2 = std::log(h.beta_estimates[k + 2]);
    min_second = std::min(min_second, l2 - 2.0 * l1 + l0);
    min_first = std::min({min_first, l1 - l0, l2 - l1});
  }
  res.gates.push_back(gate_ge("beta_log_convex", min_second, threshold(c, "beta_log_convex", 0.0),
                              "min second difference of log beta_q for q >= 3"));
  res.gates.push_back(gate_ge("beta_increasing", min_first, threshold(c, "beta_increasing", 0.0),
                              "min first difference of log beta_q for q >= 3"));
  res.gates.push_back({"proxy_interior_minimum", static_cast<double>(h.q_star), static_cast<double>(h.q_max()),
                       !h.q_star_on_boundary, "argmin of the error proxy lies strictly inside [0, q_max]"});
  res.gates.push_back(gate_le("proxy_minimum_ratio", h.error_proxy[static_cast<std::size_t>(h.q_star)] / h.error_proxy[0],
                              threshold(c, "proxy_minimum_ratio", 1e-2), "minimal error proxy / q = 0 proxy"));
  res.convergence_table = "norms";
  res.convergence_columns = {"full_norm"};
  return res;
}

// -------------------------------------------------------------- decay-rate

ExperimentResult run_decay_rate(const ExperimentConfig& c, unsigned) {
  const FamilyPtr f = make_family(c.family);
  const GapFunction gap = f->gap_function();
  DecayRatePrediction p, half;
  Complex nt;
  try {
    p = decay_rate(gap, c.contour_radius);
    half = decay_rate(gap, 0.5 * p.contour_radius);
    nt = natural_time(*f, p.z0);
  } catch (const Error& e) {
    rethrow_with(e, "family=" + c.family.name);
  }
  double closed = std::nan("");
  const double d = c.family.delta;
  if (c.family.name == "zener") closed = std::numbers::pi * d * d / 4.0;
  if (c.family.name == "constant_gap") closed = d;
  ExperimentResult res;
  res.tables.push_back(Table{"routes",
                             {"closed_form", "contour", "natural_time", "contour_half_radius", "z0_re", "z0_im",
                              "contour_radius", "quadrature_error"},
                             {{closed, p.gamma, std::abs(nt.imag()), half.gamma, p.z0.real(), p.z0.imag(),
                               p.contour_radius, p.quadrature_error_estimate}}});
  Table amps{"predictions", {"epsilon", "amplitude"}, {}};
  for (double eps : c.epsilon_grid) amps.rows.push_back({eps, c.prediction_prefactor * std::exp(-p.gamma / eps)});
  res.tables.push_back(amps);
  double spread = std::max(rel(p.gamma, std::abs(nt.imag())), 0.0);
  if (!std::isnan(closed)) spread = std::max({spread, rel(p.gamma, closed), rel(std::abs(nt.imag()), closed)});
  res.gates.push_back(gate_le("three_route", spread, threshold(c, "three_route", 1e-6),
                              "max pairwise relative difference of the decay-rate routes"));
  res.gates.push_back(gate_le("deformation", rel(half.gamma, p.gamma), threshold(c, "deformation", 1e-8),
                              "relative change of the contour value when the loop radius is halved"));
  res.convergence_table = "routes";
  res.convergence_columns = {"contour"};
  return res;
}

// ------------------------------------------------------------- bo-transmit

StationaryOptions stationary_options(const ExperimentConfig& c) {
  StationaryOptions o;
  o.x_max = c.x_max;
  o.abs_tolerance = c.tolerance;
  o.rel_tolerance = c.tolerance;
  return o;
}

ExperimentResult run_bo_transmit(const ExperimentConfig& c, unsigned threads) {
  const FamilyPtr f = make_family(c.family);
  const std::size_t n = c.epsilon_grid.size();
  // The same sweep at doubled delta checks the quadratic small-delta scaling.
  FamilyConfig doubled = c.family;
  doubled.delta *= 2.0;
  const FamilyPtr f2 = make_family(doubled);
  std::vector<StationarySolution> sol(2 * n);
  parallel_for(2 * n, threads, [&](std::size_t i) {
    const double eps = c.epsilon_grid[i % n];
    try {
      sol[i] = solve_stationary(i < n ? *f : *f2, c.energy, eps, stationary_options(c));
    } catch (const Error& e) {
      rethrow_with(e, coords(c, eps, c.energy) + (i < n ? "" : " (doubled delta)"));
    }
  });
  ExperimentResult res;
  Table coeff{"coefficients",
              {"epsilon", "inv_eps2", "c1_minus_abs", "c2_minus_abs", "c1_plus_abs", "c2_plus_abs", "flux_defect",
               "window_drift"},
              {}};
  std::vector<double> x, y, y2;
  double worst_flux = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double eps = c.epsilon_grid[i];
    const StationarySolution& s = sol[i];
    coeff.rows.push_back({eps, 1.0 / (eps * eps), std::abs(s.c(1, -1)), std::abs(s.c(2, -1)), std::abs(s.c(1, 1)),
                          std::abs(s.c(2, 1)), s.flux_defect, s.window_drift});
    worst_flux = std::max(worst_flux, s.flux_defect);
    if (std::abs(s.c(1, -1)) >= c.amplitude_floor) {
      x.push_back(1.0 / (eps * eps));
      y.push_back(std::log(std::abs(s.c(1, -1))));
      y2.push_back(std::log(std::abs(sol[n + i].c(1, -1))));
    }
  }
  if (x.size() < 4) throw Error(ErrorCode::kInsufficientData, "log slope needs >= 4 amplitudes above the floor");
  const double s1 = slope(x, y), s2 = slope(x, y2);
  const double contour = crossing_integral(*f, c.energy).value.imag();
  const double contour2 = crossing_integral(*f2, c.energy).value.imag();
  const double lowest_level = channel_data(*f, c.energy).level_minus[1];
  (void)lowest_level;
  // Classical momentum at the crossing of the uncoupled levels (E_2(0) = 0).
  const double kc = std::sqrt(2.0 * (c.energy - f->pauli(0.0).c0.real()));
  const double small_delta = c.family.delta * c.family.delta * std::numbers::pi / (4.0 * kc);
  res.tables.push_back(coeff);
  res.tables.push_back(Table{"slope",
                             {"delta", "slope", "contour_value", "small_delta_value", "slope_ratio",
                              "doubled_delta_slope", "doubled_delta_contour", "doubling_ratio"},
                             {{c.family.delta, s1, contour, small_delta, -s1 / contour, s2, contour2, s2 / s1}}});
  res.gates.push_back(gate_le("slope", std::abs(-s1 / contour - 1.0), threshold(c, "slope", 0.05),
                              "|slope / (-Im loop integral of k_2) - 1|"));
  res.gates.push_back(gate_le("contour_vs_small_delta", rel(contour, small_delta),
                              threshold(c, "contour_vs_small_delta", 0.15),
                              "contour value against delta^2 pi / (4 k_c)"));
  res.gates.push_back(gate_le("flux", worst_flux, threshold(c, "flux", 1e-8), "max flux defect over the sweep"));
  res.gates.push_back(gate_le("delta_doubling", std::abs(s2 / s1 / 4.0 - 1.0), threshold(c, "delta_doubling", 0.15),
                              "|slope(2 delta) / slope(delta) / 4 - 1|"));
  res.convergence_table = "coefficients";
  res.convergence_columns = {"c1_minus_abs"};
  return res;
}

// --------------------------------------------------------------- bo-packet

EnergyDensity make_density(const DensityConfig& d) {
  EnergyDensity e;
  e.E0 = d.E0;
  e.g = d.g;
  e.E_min = d.E_min;
  e.E_max = d.E_max;
  const double slope_p = d.p_slope, e0 = d.E0;
  e.P = [slope_p, e0](double E, double) { return Complex{1.0 + slope_p * (E - e0), 0.0}; };
  return e;
}

ExperimentResult run_bo_packet(const ExperimentConfig& c, unsigned threads) {
  const FamilyPtr f = make_family(c.family);
  const EnergyDensity density = make_density(c.density);
  if (c.packet_times.size() < 2) config_error("bo-packet needs two packet_times");
  AlphaMinimum mn;
  AlphaKappa at_e0;
  try {
    mn = minimize_alpha(*f, density);
    at_e0 = alpha_kappa(*f, density, density.E0);
  } catch (const Error& e) {
    rethrow_with(e, "family=" + c.family.name + ", density window");
  }
  ExperimentResult res;
  res.tables.push_back(Table{"alpha",
                             {"E0", "E_star", "k_star", "alpha_star", "alpha_E0", "alpha_kk", "kappa_star", "kappa_k",
                              "kappa_kk"},
                             {{density.E0, mn.E_star, mn.k_star, mn.alpha_star, at_e0.alpha, mn.alpha_kk,
                               mn.kappa_star, mn.kappa_k, mn.kappa_kk}}});
  res.gates.push_back({"E_star_above_E0", mn.E_star - density.E0, 0.0, mn.E_star > density.E0, "E* - E0 > 0"});
  res.gates.push_back(
      {"alpha_decrease", at_e0.alpha - mn.alpha_star, 0.0, mn.alpha_star < at_e0.alpha, "alpha(E0) - alpha(E*) > 0"});

  Table packets{"packets",
                {"epsilon", "mismatch", "mismatch_t1", "synth_norm", "predicted_norm", "center_t0", "center_t1", "velocity", "k_star",
                 "gaussian_residual", "plancherel_defect", "points"},
                {}};
  std::vector<double> eps_sorted = c.epsilon_grid;
  std::sort(eps_sorted.begin(), eps_sorted.end(), std::greater<>());
  const double t0 = c.packet_times[0], t1 = c.packet_times[1];
  StationaryOptions so = stationary_options(c);
  so.check_window = false;  // checked once per sweep below at E*
  double worst_velocity = 0.0, worst_gauss = 0.0, worst_planch = 0.0, worst_increase = -1.0, last_mismatch = -1.0;
  Table field{"field", {"x", "synth_re", "synth_im", "predicted_re", "predicted_im"}, {}};
  for (double eps : eps_sorted) {
    const double eta = eps * eps;
    try {
      (void)solve_stationary(*f, mn.E_star, eps, stationary_options(c));
      auto window = [&](double t) {
        const double a = mn.kappa_k + mn.k_star * t;
        const double tt = t + mn.kappa_kk;
        const double sigma = std::sqrt(0.5 * eta * (mn.alpha_kk + tt * tt / mn.alpha_kk));
        const double lo = std::max(a - c.packet_half_width * sigma, 1.0001 * c.x_max);
        return uniform_grid(lo, a + c.packet_half_width * sigma, eta / 20.0);
      };
      const std::vector<double> x0 = window(t0), x1 = window(t1);
      const EnergyGrid coarse = solve_energy_grid(*f, density, eps, c.energy_nodes, so, threads);
      const EnergyGrid fine = solve_energy_grid(*f, density, eps, 2 * c.energy_nodes, so, threads);
      const ChannelFilter transmitted{1, -1};
      const PacketField pc = synthesize_packet(*f, density, coarse, t0, x0, transmitted);
      const PacketField p0 = synthesize_packet(*f, density, fine, t0, x0, transmitted);
      const PacketField p1 = synthesize_packet(*f, density, fine, t1, x1, transmitted);
      const double change = std::abs(pc.l2_norm - p0.l2_norm) / p0.l2_norm;
      if (change > 0.01) {
        std::ostringstream os;
        os << "doubling the energy grid changes the packet norm by " << 100.0 * change << "%";
        throw Error(ErrorCode::kQuadratureUnderResolved, os.str());
      }
      const PredictedPacket pred = predicted_transmitted_packet(*f, density, mn, eps, t0, x0);
      const double mismatch = relative_l2_mismatch(x0, p0.scalar, pred.field, 0.0);
      // Diagnostic only: the mismatch should not grow with time.
      const PredictedPacket pred1 = predicted_transmitted_packet(*f, density, mn, eps, t1, x1);
      const double mismatch1 = relative_l2_mismatch(x1, p1.scalar, pred1.field, 0.0);
      const double c0 = packet_center(x0, p0.scalar), c1 = packet_center(x1, p1.scalar);
      const double velocity = (c1 - c0) / (t1 - t0);
      std::vector<double> dens;
      for (const Complex& v : p0.scalar) dens.push_back(std::norm(v));
      const GaussianFit gfit = fit_gaussian(x0, dens);
      // Plancherel: ||psi_1||^2 = pi eta int |Q c_1^-|^2 dE for the free packet.
      double expected = 0.0;
      for (std::size_t k = 0; k < fine.energies.size(); ++k) {
        expected += fine.weights[k] * std::norm(density.Q(fine.energies[k], eps) * fine.solutions[k].c(1, -1));
      }
      expected = std::sqrt(std::numbers::pi * eta * expected);
      const double planch = rel(p0.l2_norm, expected);
      packets.rows.push_back({eps, mismatch, mismatch1, p0.l2_norm, pred.amplitude, c0, c1, velocity, mn.k_star,
                              gfit.max_residual, planch, static_cast<double>(x0.size())});
      worst_velocity = std::max(worst_velocity, rel(velocity, mn.k_star));
      worst_gauss = std::max(worst_gauss, gfit.max_residual);
      worst_planch = std::max(worst_planch, planch);
      if (last_mismatch >= 0.0) worst_increase = std::max(worst_increase, mismatch - last_mismatch);
      last_mismatch = mismatch;
      if (eps == eps_sorted.back()) {
        for (std::size_t k = 0; k < x0.size(); k += 4) {
          field.rows.push_back(
              {x0[k], p0.scalar[k].real(), p0.scalar[k].imag(), pred.field[k].real(), pred.field[k].imag()});
        }
      }
    } catch (const Error& e) {
      rethrow_with(e, coords(c, eps));
    }
  }
  res.tables.push_back(packets);
  res.tables.push_back(field);
  res.gates.push_back(gate_le("mismatch_monotone", worst_increase, threshold(c, "mismatch_monotone", 0.0),
                              "largest increase of the mismatch as epsilon decreases (must be negative)"));
  if (worst_increase == 0.0) res.gates.back().passed = false;
  res.gates.push_back(gate_le("mismatch_smallest", last_mismatch, threshold(c, "mismatch", 0.25),
                              "normalised L2 mismatch at the smallest epsilon"));
  res.gates.push_back(gate_le("velocity", worst_velocity, threshold(c, "velocity", 0.01),
                              "relative error of the centre velocity against k*"));
  res.gates.push_back(gate_le("gaussian_residual", worst_gauss, threshold(c, "gaussian_residual", 0.05),
                              "Gaussian fit residual of |psi_1|^2 relative to its peak"));
  res.gates.push_back(gate_le("plancherel", worst_planch, threshold(c, "plancherel", 0.02),
                              "packet norm against the energy-space quadrature"));
  res.convergence_table = "packets";
  res.convergence_columns = {"synth_norm"};
  return res;
}

// ---------------------------------------------------------------- helpers

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_number(const std::string& s) {
  if (s == "nan") return std::nan("");
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  return std::stod(s);
}

double relative_difference(double a, double b) {
  if (std::isnan(a) && std::isnan(b)) return 0.0;
  if (a == b) return 0.0;
  const double scale = std::max(std::abs(a), std::abs(b));
  return std::abs(a - b) / scale;
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

std::string_view to_string(ExperimentKind kind) {
  for (const auto& [k, name] : kNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

ExperimentKind experiment_from_string(std::string_view name) {
  for (const auto& [k, n] : kNames) {
    if (n == name) return k;
  }
  config_error("unknown experiment '" + std::string(name) + "'");
}

FamilyPtr make_family(const FamilyConfig& c) {
  try {
    if (c.name == "zener") return zener(c.delta);
    if (c.name == "constant_gap") return constant_gap(c.delta);
    if (c.name == "tanh_model") return tanh_model(c.delta);
    if (c.name == "decoupled_tanh") return decoupled_tanh();
  } catch (const Error& e) {
    config_error(std::string("family parameters rejected: ") + e.what());
  }
  config_error("unknown family '" + c.name + "'");
}

ExperimentConfig parse_config(const json& j) {
  static const std::set<std::string> known{
      "schema_version", "experiment",      "family",          "epsilon_grid",         "time_window",
      "tolerance",      "q_max",           "amplitude_floor", "prediction_prefactor", "q_values",
      "proxy",          "contour_radius",  "energy",          "x_max",                "density",
      "packet_times",   "energy_nodes",    "packet_half_width", "gates",              "output_dir",
      "description"};
  if (!j.is_object()) config_error("config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) config_error("unknown config key '" + key + "'");
  }
  ExperimentConfig c;
  try {
    if (!j.contains("schema_version")) config_error("missing schema_version");
    c.schema_version = j.at("schema_version").get<int>();
    if (c.schema_version != kConfigSchemaVersion) {
      config_error("unsupported schema_version " + std::to_string(c.schema_version));
    }
    if (!j.contains("experiment")) config_error("missing experiment");
    c.experiment = experiment_from_string(j.at("experiment").get<std::string>());
    if (j.contains("family")) {
      const json& f = j.at("family");
      read(f, "name", c.family.name);
      read(f, "delta", c.family.delta);
    }
    read(j, "epsilon_grid", c.epsilon_grid);
    if (j.contains("time_window")) {
      const json& t = j.at("time_window");
      read(t, "start", c.t_start);
      read(t, "end", c.t_end);
      read(t, "step", c.t_step);
    }
    read(j, "tolerance", c.tolerance);
    read(j, "q_max", c.q_max);
    read(j, "amplitude_floor", c.amplitude_floor);
    read(j, "prediction_prefactor", c.prediction_prefactor);
    read(j, "q_values", c.q_values);
    if (j.contains("proxy")) {
      const json& p = j.at("proxy");
      read(p, "epsilon", c.proxy_epsilon);
      read(p, "t_start", c.proxy_t_start);
      read(p, "t_end", c.proxy_t_end);
      read(p, "t_step", c.proxy_t_step);
      read(p, "q_max", c.proxy_q_max);
    }
    read(j, "contour_radius", c.contour_radius);
    read(j, "energy", c.energy);
    read(j, "x_max", c.x_max);
    if (j.contains("density")) {
      const json& d = j.at("density");
      read(d, "E0", c.density.E0);
      read(d, "g", c.density.g);
      read(d, "E_min", c.density.E_min);
      read(d, "E_max", c.density.E_max);
      read(d, "p_slope", c.density.p_slope);
    }
    read(j, "packet_times", c.packet_times);
    read(j, "energy_nodes", c.energy_nodes);
    read(j, "packet_half_width", c.packet_half_width);
    read(j, "gates", c.gates);
    read(j, "output_dir", c.output_dir);
  } catch (const json::exception& e) {
    config_error(std::string("malformed config: ") + e.what());
  }
  if (c.epsilon_grid.empty()) config_error("epsilon_grid is empty");
  for (double e : c.epsilon_grid) {
    if (!(e > 0.0)) config_error("epsilon_grid entries must be positive");
  }
  if (!(c.t_end > c.t_start) || !(c.t_step > 0.0)) config_error("time_window needs start < end and step > 0");
  if (!(c.tolerance > 0.0)) config_error("tolerance must be positive");
  if (c.q_max < 0 || c.proxy_q_max < 0) config_error("q_max must be non-negative");
  for (int q : c.q_values) {
    if (q < 0) config_error("q_values must be non-negative");
  }
  if (!(c.density.E_max > c.density.E_min) || !(c.density.E0 > c.density.E_min && c.density.E0 < c.density.E_max)) {
    config_error("density window must contain E0");
  }
  if (c.energy_nodes < 2) config_error("energy_nodes must be >= 2");
  (void)make_family(c.family);
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) config_error("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    config_error("invalid JSON in " + path.string() + ": " + e.what());
  }
  return parse_config(j);
}

json to_json(const ExperimentConfig& c) {
  json j;
  j["schema_version"] = c.schema_version;
  j["experiment"] = std::string(to_string(c.experiment));
  j["family"] = {{"name", c.family.name}, {"delta", c.family.delta}};
  j["epsilon_grid"] = c.epsilon_grid;
  j["time_window"] = {{"start", c.t_start}, {"end", c.t_end}, {"step", c.t_step}};
  j["tolerance"] = c.tolerance;
  j["q_max"] = c.q_max;
  j["amplitude_floor"] = c.amplitude_floor;
  j["prediction_prefactor"] = c.prediction_prefactor;
  j["q_values"] = c.q_values;
  j["proxy"] = {{"epsilon", c.proxy_epsilon},
                {"t_start", c.proxy_t_start},
                {"t_end", c.proxy_t_end},
                {"t_step", c.proxy_t_step},
                {"q_max", c.proxy_q_max}};
  j["contour_radius"] = c.contour_radius;
  j["energy"] = c.energy;
  j["x_max"] = c.x_max;
  j["density"] = {{"E0", c.density.E0},
                  {"g", c.density.g},
                  {"E_min", c.density.E_min},
                  {"E_max", c.density.E_max},
                  {"p_slope", c.density.p_slope}};
  j["packet_times"] = c.packet_times;
  j["energy_nodes"] = c.energy_nodes;
  j["packet_half_width"] = c.packet_half_width;
  j["gates"] = c.gates;
  j["output_dir"] = c.output_dir;
  return j;
}

std::vector<double> Table::column(std::string_view col) const {
  const auto it = std::find(columns.begin(), columns.end(), col);
  if (it == columns.end()) throw Error(ErrorCode::kSchemaMismatch, "table " + name + " has no column " + std::string(col));
  const auto k = static_cast<std::size_t>(it - columns.begin());
  std::vector<double> out;
  for (const auto& r : rows) out.push_back(r[k]);
  return out;
}

std::string to_csv(const Table& t) {
  std::string s;
  for (std::size_t i = 0; i < t.columns.size(); ++i) s += (i ? "," : "") + t.columns[i];
  s += '\n';
  for (const auto& r : t.rows) {
    for (std::size_t i = 0; i < r.size(); ++i) s += (i ? "," : "") + format_number(r[i]);
    s += '\n';
  }
  return s;
}

Table read_csv(const std::filesystem::path& path, std::string name) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kSchemaMismatch, "missing table " + path.string());
  Table t;
  t.name = name.empty() ? path.stem().string() : std::move(name);
  std::string line;
  auto split = [](const std::string& l) {
    std::vector<std::string> out;
    std::stringstream ss(l);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    return out;
  };
  if (std::getline(in, line)) t.columns = split(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    for (const auto& cell : split(line)) row.push_back(parse_number(cell));
    t.rows.push_back(std::move(row));
  }
  return t;
}

void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const unsigned nt = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < nt; ++t) pool.emplace_back(work);
  work();
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

ExperimentResult execute(const ExperimentConfig& c, unsigned threads) {
  switch (c.experiment) {
    case ExperimentKind::kLzSweep:
      return run_lz_sweep(c, threads);
    case ExperimentKind::kErfProfile:
      return run_erf_profile(c, threads);
    case ExperimentKind::kSuperadiabaticScan:
      return run_superadiabatic_scan(c, threads);
    case ExperimentKind::kDecayRate:
      return run_decay_rate(c, threads);
    case ExperimentKind::kBoTransmit:
      return run_bo_transmit(c, threads);
    case ExperimentKind::kBoPacket:
      return run_bo_packet(c, threads);
  }
  config_error("unhandled experiment");
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx, data.data(), data.size()) != 1 || EVP_DigestFinal_ex(ctx, digest, &len) != 1) {
    EVP_MD_CTX_free(ctx);
    throw Error(ErrorCode::kInvalidParameter, "SHA-256 digest failed");
  }
  EVP_MD_CTX_free(ctx);
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  return os.str();
}

bool RunManifest::passed() const {
  return self_convergence.passed && std::all_of(gates.begin(), gates.end(), [](const Gate& g) { return g.passed; });
}

json RunManifest::to_json() const {
  json j;
  j["schema_version"] = kManifestSchemaVersion;
  j["experiment"] = config.value("experiment", "");
  j["family"] = config.value("family", json::object());
  j["config"] = config;
  j["code_version"] = code_version;
  j["outputs"] = json::array();
  for (const auto& [file, digest] : digests) j["outputs"].push_back({{"file", file}, {"sha256", digest}});
  j["gates"] = json::array();
  for (const Gate& g : gates) {
    j["gates"].push_back({{"name", g.name},
                          {"value", g.value},
                          {"threshold", g.threshold},
                          {"passed", g.passed},
                          {"description", g.description}});
  }
  j["self_convergence"] = {{"ran", self_convergence.ran},
                           {"max_relative_difference", self_convergence.max_relative_difference},
                           {"threshold", self_convergence.threshold},
                           {"passed", self_convergence.passed}};
  j["timings_seconds"] = timings;
  j["warnings"] = warnings;
  j["passed"] = passed();
  return j;
}

CompareReport compare(const ExperimentResult& a, const ExperimentResult& b, std::string experiment) {
  CompareReport r;
  r.experiment = std::move(experiment);
  if (a.tables.size() != b.tables.size()) throw Error(ErrorCode::kSchemaMismatch, "different table sets");
  for (std::size_t t = 0; t < a.tables.size(); ++t) {
    const Table& ta = a.tables[t];
    const Table& tb = b.tables[t];
    if (ta.name != tb.name || ta.columns != tb.columns || ta.rows.size() != tb.rows.size()) {
      throw Error(ErrorCode::kSchemaMismatch, "table " + ta.name + " differs in layout");
    }
    for (std::size_t k = 0; k < ta.columns.size(); ++k) {
      ColumnDifference d{ta.name, ta.columns[k], 0.0};
      for (std::size_t i = 0; i < ta.rows.size(); ++i) {
        d.max_relative_difference = std::max(d.max_relative_difference, relative_difference(ta.rows[i][k], tb.rows[i][k]));
      }
      r.max_relative_difference = std::max(r.max_relative_difference, d.max_relative_difference);
      r.columns.push_back(d);
    }
  }
  return r;
}

CompareReport compare(const std::filesystem::path& manifest_a, const std::filesystem::path& manifest_b) {
  auto load = [](const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw Error(ErrorCode::kSchemaMismatch, "cannot open manifest " + p.string());
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kSchemaMismatch, "invalid manifest " + p.string() + ": " + e.what());
    }
    return j;
  };
  const json a = load(manifest_a), b = load(manifest_b);
  if (a.value("experiment", "") != b.value("experiment", "")) {
    throw Error(ErrorCode::kSchemaMismatch, "experiment differs: " + a.value("experiment", "") + " vs " +
                                                b.value("experiment", ""));
  }
  if (a.value("family", json::object()) != b.value("family", json::object())) {
    throw Error(ErrorCode::kSchemaMismatch, "family differs: " + a["family"].dump() + " vs " + b["family"].dump());
  }
  auto tables = [](const json& m, const std::filesystem::path& dir) {
    ExperimentResult r;
    for (const auto& o : m.at("outputs")) {
      const std::string file = o.at("file").get<std::string>();
      if (std::filesystem::path(file).extension() != ".csv") continue;
      r.tables.push_back(read_csv(dir / file));
    }
    return r;
  };
  return compare(tables(a, manifest_a.parent_path()), tables(b, manifest_b.parent_path()), a.value("experiment", ""));
}

RunManifest run(const ExperimentConfig& config, const RunOptions& options) {
  using clock = std::chrono::steady_clock;
  const std::filesystem::path dir = options.output_dir.empty() ? std::filesystem::path(config.output_dir) : options.output_dir;
  std::filesystem::create_directories(dir);
  RunManifest m;
  m.config = to_json(config);
  m.code_version = NADLAB_VERSION;

  auto start = clock::now();
  const ExperimentResult result = execute(config, options.threads);
  m.timings["run"] = std::chrono::duration<double>(clock::now() - start).count();
  m.gates = result.gates;
  m.warnings = result.warnings;

  for (const Table& t : result.tables) {
    const std::string file = t.name + ".csv";
    const std::string body = to_csv(t);
    std::ofstream out(dir / file, std::ios::binary);
    out << body;
    if (!out) throw Error(ErrorCode::kConfigInvalid, "cannot write " + (dir / file).string());
    m.digests[file] = sha256_hex(body);
  }

  if (options.self_check) {
    ExperimentConfig tight = config;
    tight.tolerance *= 0.5;
    start = clock::now();
    const ExperimentResult rerun = execute(tight, options.threads);
    m.timings["self_check"] = std::chrono::duration<double>(clock::now() - start).count();
    m.self_convergence.ran = true;
    const CompareReport diff = compare(result, rerun, std::string(to_string(config.experiment)));
    for (const ColumnDifference& d : diff.columns) {
      if (d.table != result.convergence_table) continue;
      if (std::find(result.convergence_columns.begin(), result.convergence_columns.end(), d.column) ==
          result.convergence_columns.end()) {
        continue;
      }
      m.self_convergence.max_relative_difference = std::max(m.self_convergence.max_relative_difference, d.max_relative_difference);
    }
    m.self_convergence.threshold = threshold(config, "self_convergence", 0.1);
    m.self_convergence.passed = m.self_convergence.max_relative_difference < m.self_convergence.threshold;
  }

  std::ofstream out(dir / "manifest.json");
  out << std::setw(2) << m.to_json() << '\n';
  return m;
}

}  // namespace nadlab
