#include "nadlab/superadiabatic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <thread>

#include <Eigen/Dense>

#include "nadlab/errors.hpp"

namespace nadlab {

namespace {

Complex root_of(const Pauli& p) { return std::sqrt(p.cx * p.cx + p.cy * p.cy + p.cz * p.cz); }

void require_eps(double epsilon) {
  if (!(epsilon > 0.0) || !(epsilon <= 1.0)) throw Error(ErrorCode::kInvalidParameter, "epsilon must lie in (0, 1]");
}

[[noreturn]] void gap_closure(int q, double t, double gap_q, double gap0, double epsilon) {
  std::ostringstream os;
  os << "H_" << q << " lost its spectral separation at t = " << t << " (gap " << gap_q << " vs " << gap0
     << ", epsilon = " << epsilon << ")";
  throw GapClosureError(q, os.str());
}

void fill_summary(ProjectorHierarchy& h, const HamiltonianFamily& family) {
  const double eps = h.epsilon;
  const int levels = static_cast<int>(h.levels.size());
  h.beta_estimates.assign(levels, 0.0);
  h.error_proxy.assign(levels, 0.0);
  h.p_deviation.assign(levels, 0.0);
  for (int q = 0; q < levels; ++q) {
    const HierarchyLevel& lv = h.levels[q];
    double sup_k = 0.0, sup_p = 0.0;
    for (std::size_t i = lv.first; i <= lv.last; ++i) {
      const Matrix2 prev_k = q == 0 ? Matrix2::Zero().eval() : h.levels[q - 1].k[i];
      sup_k = std::max(sup_k, operator_norm(lv.k[i] - prev_k));
      sup_p = std::max(sup_p, operator_norm(lv.p[i] - h.levels[0].p[i]));
    }
    h.error_proxy[q] = sup_k;
    h.beta_estimates[q] = sup_k / std::pow(eps, q + 1);
    h.p_deviation[q] = sup_p;
  }
  double g = std::numeric_limits<double>::infinity();
  for (double t : h.grid) g = std::min(g, family.gap(t));
  h.min_gap = g;
  h.heuristic_q = g / eps;
  const OptimalLevel opt = optimal_q(h);
  h.q_star = opt.q;
  h.q_star_on_boundary = opt.on_boundary;
}

ProjectorHierarchy build_taylor(const HamiltonianFamily& family, double epsilon, const std::vector<double>& grid,
                                int q_max, const HierarchyOptions& options) {
  const std::size_t n = grid.size();
  std::vector<HierarchyPoint> points(n);
  std::vector<int> closure(n, -1);

  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      try {
        points[i] = hierarchy_at(family, epsilon, grid[i], q_max);
      } catch (const GapClosureError& e) {
        closure[i] = e.level();
        if (options.truncate_on_gap_closure && e.level() > 0) points[i] = hierarchy_at(family, epsilon, grid[i], e.level() - 1);
      }
    }
  };
  const unsigned threads = std::max(1u, std::min<unsigned>(options.threads, static_cast<unsigned>(n)));
  if (threads <= 1) {
    work(0, n);
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (n + threads - 1) / threads;
    for (unsigned w = 0; w < threads; ++w) {
      const std::size_t b = w * chunk, e = std::min(n, b + chunk);
      if (b < e) pool.emplace_back(work, b, e);
    }
    for (auto& th : pool) th.join();
  }

  int closed = -1;
  for (std::size_t i = 0; i < n; ++i) {
    if (closure[i] >= 0 && (closed < 0 || closure[i] < closed)) closed = closure[i];
  }
  int top = q_max;
  if (closed >= 0) {
    if (!options.truncate_on_gap_closure || closed == 0) {
      for (std::size_t i = 0; i < n; ++i) {
        if (closure[i] == closed) hierarchy_at(family, epsilon, grid[i], q_max);  // rethrows with coordinates
      }
    }
    top = closed - 1;
  }

  ProjectorHierarchy h;
  h.epsilon = epsilon;
  h.grid = grid;
  h.gap_closure_level = closed;
  h.levels.resize(static_cast<std::size_t>(top) + 1);
  for (int q = 0; q <= top; ++q) {
    HierarchyLevel& lv = h.levels[q];
    lv.first = 0;
    lv.last = n - 1;
    lv.p.resize(n);
    lv.k.resize(n);
    lv.h.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      lv.p[i] = points[i].p[q];
      lv.k[i] = points[i].k[q];
      lv.h[i] = points[i].h[q];
    }
  }
  return h;
}

// Grid route: central differences with one Richardson level; a second,
// coarser Richardson value supplies the error estimate.
ProjectorHierarchy build_finite_difference(const HamiltonianFamily& family, double epsilon,
                                           const std::vector<double>& grid, int q_max,
                                           const HierarchyOptions& options) {
  const std::size_t n = grid.size();
  if (n < 9) throw Error(ErrorCode::kGridTooCoarse, "finite-difference hierarchy needs at least 9 grid points");
  const double dt = (grid.back() - grid.front()) / static_cast<double>(n - 1);
  for (std::size_t i = 1; i < n; ++i) {
    if (std::abs(grid[i] - grid[i - 1] - dt) > 1e-9 * std::max(1.0, std::abs(dt))) {
      throw Error(ErrorCode::kInvalidParameter, "finite-difference hierarchy needs a uniform grid");
    }
  }

  ProjectorHierarchy h;
  h.epsilon = epsilon;
  h.grid = grid;

  std::vector<double> gap0(n);
  std::vector<Complex> tracked(n);
  HierarchyLevel level;
  level.first = 0;
  level.last = n - 1;
  level.p.resize(n);
  level.h.resize(n);
  level.k.assign(n, Matrix2::Zero());
  for (std::size_t i = 0; i < n; ++i) {
    const SpectralFrame f = family.frame(grid[i]);
    level.h[i] = family.evaluate(grid[i]);
    level.p[i] = f.p_low;
    gap0[i] = f.gap;
    tracked[i] = f.e_low;
  }

  for (int q = 0; q <= q_max; ++q) {
    if (level.last < level.first + 8) {
      if (q == 0) throw Error(ErrorCode::kGridTooCoarse, "grid too short for the differentiation stencil");
      break;
    }
    const std::size_t first = level.first + 4, last = level.last - 4;
    for (std::size_t i = first; i <= last; ++i) {
      const auto& p = level.p;
      const Matrix2 d1 = (p[i + 1] - p[i - 1]) / (2.0 * dt);
      const Matrix2 d2 = (p[i + 2] - p[i - 2]) / (4.0 * dt);
      const Matrix2 d4 = (p[i + 4] - p[i - 4]) / (8.0 * dt);
      const Matrix2 r1 = (4.0 * d1 - d2) / 3.0;
      const Matrix2 r2 = (4.0 * d2 - d4) / 3.0;
      h.differentiation_error = std::max(h.differentiation_error, operator_norm(r2 - r1) / 15.0);
      level.k[i] = commutator(r1, p[i]);
    }
    if (h.differentiation_error > options.max_differentiation_error) {
      std::ostringstream os;
      os << "Richardson error estimate " << h.differentiation_error << " exceeds "
         << options.max_differentiation_error << " at level " << q << " (spacing " << dt << ")";
      throw Error(ErrorCode::kGridTooCoarse, os.str());
    }
    level.first = first;
    level.last = last;
    h.levels.push_back(level);
    if (q == q_max) break;

    HierarchyLevel next;
    next.first = first;
    next.last = last;
    next.p.assign(n, Matrix2::Zero());
    next.h.assign(n, Matrix2::Zero());
    next.k.assign(n, Matrix2::Zero());
    bool closed = false;
    for (std::size_t i = first; i <= last && !closed; ++i) {
      const Matrix2 hq = family.evaluate(grid[i]) - Complex{0.0, epsilon} * level.k[i];
      const auto [l1, l2] = eigenvalues(hq);
      const double sep = std::abs(l1 - l2);
      if (sep < 0.5 * gap0[i]) {
        if (!options.truncate_on_gap_closure) gap_closure(q + 1, grid[i], sep, gap0[i], epsilon);
        h.gap_closure_level = q + 1;
        closed = true;
        break;
      }
      const Complex lam = std::abs(l1 - tracked[i]) <= std::abs(l2 - tracked[i]) ? l1 : l2;
      tracked[i] = lam;
      next.h[i] = hq;
      next.p[i] = riesz_projector(hq, lam, 0.5 * sep);
    }
    if (closed) break;
    level = std::move(next);
  }
  return h;
}

}  // namespace

HierarchyPoint hierarchy_at(const HamiltonianFamily& family, double epsilon, double t, int q_max) {
  require_eps(epsilon);
  if (q_max < 0) throw Error(ErrorCode::kInvalidParameter, "q_max must be >= 0");
  const int degree = q_max + 1;
  const PauliSeries h = family.jet(t, degree);
  const Complex w0 = root_of(value(h));
  const double gap0 = 2.0 * std::abs(w0);
  if (gap0 < kDegeneracyThreshold) {
    std::ostringstream os;
    os << "spectral gap collapsed at t = " << t;
    throw Error(ErrorCode::kDegenerateSpectrum, os.str());
  }

  HierarchyPoint out;
  out.p.reserve(degree);
  out.k.reserve(degree);
  out.h.reserve(degree);
  out.gap.reserve(degree);
  const Complex minus_i_eps{0.0, -epsilon};
  PauliSeries k_prev = zero_pauli_series(degree);
  Complex root = w0;
  for (int q = 0; q <= q_max; ++q) {
    const PauliSeries hq = h + minus_i_eps * k_prev;
    const Pauli hv = value(hq);
    const Complex w = root_of(hv);
    // Continue the branch connected to the level below.
    const Complex tracked = std::abs(w - root) <= std::abs(w + root) ? w : -w;
    const double gap_q = 2.0 * std::abs(w);
    if (gap_q < 0.5 * gap0) gap_closure(q, t, gap_q, gap0, epsilon);
    const PauliSeries pq = low_projector(hq, tracked);
    const PauliSeries kq = commutator(derivative(pq), pq);
    out.h.push_back(from_pauli(hv));
    out.p.push_back(from_pauli(value(pq)));
    out.k.push_back(from_pauli(value(kq)));
    out.gap.push_back(gap_q);
    root = tracked;
    k_prev = kq;
  }
  return out;
}

Matrix2 superadiabatic_projector(const HamiltonianFamily& family, double epsilon, double t, int q) {
  return hierarchy_at(family, epsilon, t, q).p.back();
}

Matrix2 superadiabatic_generator(const HamiltonianFamily& family, double epsilon, double t, int q) {
  const HierarchyPoint pt = hierarchy_at(family, epsilon, t, q);
  return pt.h.back() + Complex{0.0, epsilon} * pt.k.back();
}

PropagatorResult evolve_vq(const HamiltonianFamily& family, const EvolutionSpec& spec, int q) {
  const double eps = spec.epsilon;
  auto check = [](double t, const Matrix2& g) {
    const double scale = std::max(1.0, g.cwiseAbs().maxCoeff());
    if ((g - g.adjoint()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
      std::ostringstream os;
      os << "superadiabatic generator not Hermitian at t = " << t;
      throw Error(ErrorCode::kNonHermitianInput, os.str());
    }
  };
  return evolve([&family, eps, q](double t) { return superadiabatic_generator(family, eps, t, q); }, spec, check);
}

ProjectorHierarchy build_hierarchy(const HamiltonianFamily& family, double epsilon, const std::vector<double>& t_grid,
                                   int q_max, const HierarchyOptions& options) {
  require_eps(epsilon);
  if (q_max < 0) throw Error(ErrorCode::kInvalidParameter, "q_max must be >= 0");
  if (t_grid.empty()) throw Error(ErrorCode::kInvalidParameter, "empty time grid");
  ProjectorHierarchy h = options.differentiation == Differentiation::kTaylor
                             ? build_taylor(family, epsilon, t_grid, q_max, options)
                             : build_finite_difference(family, epsilon, t_grid, q_max, options);
  if (h.levels.empty()) throw GapClosureError(0, "no hierarchy level survived");
  fill_summary(h, family);
  return h;
}

OptimalLevel optimal_q(const ProjectorHierarchy& hierarchy) {
  OptimalLevel out;
  out.heuristic = hierarchy.heuristic_q;
  const auto& proxy = hierarchy.error_proxy;
  if (proxy.empty()) return out;
  const double largest = *std::max_element(proxy.begin(), proxy.end());
  if (largest <= 0.0) return out;  // static family: every level coincides
  const auto it = std::min_element(proxy.begin(), proxy.end());
  out.q = static_cast<int>(it - proxy.begin());
  out.on_boundary = proxy.size() > 1 && out.q == static_cast<int>(proxy.size()) - 1;
  return out;
}

double adiabatic_defect(const HamiltonianFamily& family, const EvolutionSpec& spec, const BasisChoice& basis) {
  switch (basis.kind) {
    case BasisKind::kInstantaneous:
      return adiabatic_defect(family, spec);
    case BasisKind::kSuperadiabatic: {
      const double eps = spec.epsilon;
      const int q = basis.q;
      return adiabatic_defect(family, spec,
                              [&family, eps, q](double t) { return superadiabatic_projector(family, eps, t, q); });
    }
    case BasisKind::kFixed:
    default: {
      const Matrix2 p = family.frame(spec.t_start).p_low;
      return adiabatic_defect(family, spec, [p](double) { return p; });
    }
  }
}

Vector2 range_vector(const Matrix2& projector) {
  const double n0 = projector.col(0).norm(), n1 = projector.col(1).norm();
  Vector2 v = n0 >= n1 ? Vector2(projector.col(0)) : Vector2(projector.col(1));
  return v / v.norm();
}

TransitionHistory transition_history(const HamiltonianFamily& family, double epsilon, const std::vector<double>& times,
                                     int q, const StepControl& control) {
  if (times.empty()) throw Error(ErrorCode::kInvalidParameter, "empty time list");
  if (q < 0) throw Error(ErrorCode::kInvalidParameter, "q must be >= 0");
  EvolutionSpec spec;
  spec.epsilon = epsilon;
  spec.t_start = times.front();
  spec.t_end = *std::max_element(times.begin(), times.end());
  spec.step_control = control;
  spec.sample_times = times;
  spec.basis_out = {q == 0 ? BasisKind::kInstantaneous : BasisKind::kSuperadiabatic, q};

  TransitionHistory out;
  out.basis = spec.basis_out;
  out.propagation = evolve_u(family, spec);
  const Vector2 chi = range_vector(superadiabatic_projector(family, epsilon, spec.t_start, q));
  const auto& ht = out.propagation.history_times;
  out.times = ht;
  out.coefficients.reserve(ht.size());
  for (std::size_t i = 0; i < ht.size(); ++i) {
    const Matrix2 p = superadiabatic_projector(family, epsilon, ht[i], q);
    const Vector2 psi = out.propagation.history[i] * chi;
    out.coefficients.push_back(std::min(1.0, ((Matrix2::Identity() - p) * psi).norm()));
  }
  return out;
}

TransitionHistory transition_history(const HamiltonianFamily& family, const ProjectorHierarchy& hierarchy, int q,
                                     const StepControl& control) {
  if (q < 0 || q > hierarchy.q_max()) throw Error(ErrorCode::kInvalidParameter, "q outside the hierarchy");
  return transition_history(family, hierarchy.epsilon, hierarchy.grid, q, control);
}

ErfFit erf_profile_fit(const TransitionHistory& history, double delta, double epsilon) {
  return erf_profile_fit(history.times, history.coefficients, delta, epsilon);
}

ErfFit erf_profile_fit(const std::vector<double>& times, const std::vector<double>& values, double delta,
                       double epsilon) {
  const std::size_t n = times.size();
  if (n != values.size() || n < 4) throw Error(ErrorCode::kInsufficientData, "erf fit needs >= 4 (t, value) pairs");
  if (!(delta > 0.0) || !(epsilon > 0.0)) throw Error(ErrorCode::kInvalidParameter, "delta, epsilon must be > 0");

  // Work in units of the plateau so the parameters are O(1).
  double plateau = 0.0;
  const std::size_t tail = std::max<std::size_t>(1, n / 20);
  for (std::size_t i = n - tail; i < n; ++i) plateau += values[i];
  plateau /= static_cast<double>(tail);
  if (!(plateau > 0.0)) throw Error(ErrorCode::kFitDiverged, "history has no positive plateau");

  Eigen::VectorXd y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = values[i] / plateau;
  double c0 = times.front();
  for (std::size_t i = 0; i < n; ++i) {
    if (y[i] >= 0.5) {
      c0 = times[i];
      break;
    }
  }

  Eigen::Vector3d x(1.0, c0, std::sqrt(2.0 * delta * epsilon));
  auto residuals = [&](const Eigen::Vector3d& p, Eigen::VectorXd& r, Eigen::MatrixXd* jac) {
    r.resize(n);
    if (jac) jac->resize(n, 3);
    for (std::size_t i = 0; i < n; ++i) {
      const double u = (times[i] - p[1]) / p[2];
      const double s = 0.5 * (std::erf(u) + 1.0);
      r[i] = p[0] * s - y[i];
      if (jac) {
        const double g = p[0] * std::exp(-u * u) / std::sqrt(std::numbers::pi);
        (*jac)(i, 0) = s;
        (*jac)(i, 1) = -g / p[2];
        (*jac)(i, 2) = -g * u / p[2];
      }
    }
  };

  // Levenberg-Marquardt with multiplicative damping updates.
  Eigen::VectorXd r;
  Eigen::MatrixXd jac;
  residuals(x, r, &jac);
  double cost = r.squaredNorm();
  double lambda = 1e-3;
  int iter = 0;
  for (; iter < 500; ++iter) {
    const Eigen::Matrix3d jtj = jac.transpose() * jac;
    const Eigen::Vector3d grad = jac.transpose() * r;
    if (grad.cwiseAbs().maxCoeff() < 1e-15 * std::max(1.0, cost)) break;
    Eigen::Matrix3d a = jtj;
    a.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-12);
    const Eigen::Vector3d step = a.ldlt().solve(-grad);
    Eigen::Vector3d trial = x + step;
    if (!(trial[2] > 0.0)) trial[2] = 0.5 * x[2];
    Eigen::VectorXd rt;
    residuals(trial, rt, nullptr);
    const double ct = rt.squaredNorm();
    if (ct < cost) {
      const bool converged = (cost - ct) <= 1e-14 * cost || step.norm() <= 1e-13 * (1.0 + x.norm());
      x = trial;
      cost = ct;
      residuals(x, r, &jac);
      lambda = std::max(lambda / 3.0, 1e-12);
      if (converged) break;
    } else {
      lambda *= 4.0;
      if (lambda > 1e12) break;
    }
  }

  ErfFit fit;
  fit.amplitude = x[0] * plateau;
  fit.center = x[1];
  fit.width = x[2];
  fit.iterations = iter;
  fit.max_residual = std::abs(x[0]) > 0.0 ? r.cwiseAbs().maxCoeff() / std::abs(x[0]) : std::numeric_limits<double>::infinity();
  if (!std::isfinite(fit.max_residual) || fit.max_residual > 0.5 || !(fit.amplitude > 0.0)) {
    std::ostringstream os;
    os << "erf profile fit residual " << fit.max_residual << " (amplitude " << fit.amplitude << ")";
    throw Error(ErrorCode::kFitDiverged, os.str());
  }
  return fit;
}

}  // namespace nadlab
