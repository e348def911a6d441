#include "nadlab/contour.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <sstream>

#include <boost/math/special_functions/legendre.hpp>

#include "nadlab/errors.hpp"

namespace nadlab {

Complex PathPiece::point(double s) const {
  if (kind == Kind::kSegment) return a + s * (b - a);
  const double th = theta0 + s * (theta1 - theta0);
  return center + radius * Complex{std::cos(th), std::sin(th)};
}

Complex PathPiece::derivative(double s) const {
  if (kind == Kind::kSegment) return b - a;
  const double th = theta0 + s * (theta1 - theta0);
  return (theta1 - theta0) * radius * Complex{-std::sin(th), std::cos(th)};
}

ContourPath& ContourPath::segment(Complex a, Complex b) {
  if (a != b) pieces_.push_back({PathPiece::Kind::kSegment, a, b, {}, 0.0, 0.0, 0.0});
  return *this;
}

ContourPath& ContourPath::arc(Complex center, double radius, double theta0, double theta1) {
  pieces_.push_back({PathPiece::Kind::kArc, {}, {}, center, radius, theta0, theta1});
  return *this;
}

Complex ContourPath::start() const { return pieces_.empty() ? Complex{} : pieces_.front().point(0.0); }
Complex ContourPath::end() const { return pieces_.empty() ? Complex{} : pieces_.back().point(1.0); }

ContourPath loop_around(Complex z0, double radius) {
  if (!(radius > 0.0) || !(radius < z0.imag())) {
    throw Error(ErrorCode::kInvalidParameter, "loop radius must lie in (0, Im z0)");
  }
  const Complex foot{z0.real(), 0.0};
  const Complex base = z0 - Complex{0.0, radius};
  constexpr double pi = std::numbers::pi;
  ContourPath path;
  path.segment(0.0, foot).segment(foot, base).arc(z0, radius, -0.5 * pi, 1.5 * pi).segment(base, foot).segment(foot, 0.0);
  return path;
}

Continuation sqrt_continuation(std::function<Complex(Complex)> square, Complex hint) {
  struct State {
    int seen = 0;
    Complex z1, z2;  // last two nodes
    Complex v1, v2;  // values there
  };
  auto state = std::make_shared<State>();
  return [square = std::move(square), hint, state](Complex z) {
    const Complex r = std::sqrt(square(z));
    // Reference: linear extrapolation through the last two values, so a root
    // passing linearly through zero (path ending on a branch point) is still
    // followed.
    Complex ref = hint;
    if (state->seen == 1) ref = state->v1;
    if (state->seen >= 2 && state->z1 != state->z2) {
      ref = state->v1 + (state->v1 - state->v2) / (state->z1 - state->z2) * (z - state->z1);
    }
    const double d_plus = std::abs(r - ref), d_minus = std::abs(r + ref);
    const Complex pick = d_plus <= d_minus ? r : -r;
    if (state->seen > 0) {
      const double near = std::min(d_plus, d_minus), far = std::max(d_plus, d_minus);
      if (near > 0.5 * far && std::abs(r) > 1e-6) {
        std::ostringstream os;
        os << "square-root branch ambiguous at z = " << z << " (|root| = " << std::abs(r) << ")";
        throw Error(ErrorCode::kBranchDiscontinuity, os.str());
      }
    }
    state->z2 = state->z1;
    state->v2 = state->v1;
    state->z1 = z;
    state->v1 = pick;
    ++state->seen;
    return pick;
  };
}

const GaussRule& gauss_legendre(int n) {
  static std::mutex mu;
  static std::map<int, GaussRule> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  if (n < 1) throw Error(ErrorCode::kInvalidParameter, "Gauss-Legendre order must be >= 1");
  // Boost returns the non-negative zeros; mirror them into an ascending rule.
  const std::vector<double> pos = boost::math::legendre_p_zeros<double>(n);
  GaussRule rule;
  for (auto i = pos.rbegin(); i != pos.rend(); ++i) {
    if (*i > 0.0) rule.nodes.push_back(-*i);
  }
  for (double x : pos) rule.nodes.push_back(x);
  std::sort(rule.nodes.begin(), rule.nodes.end());
  for (double x : rule.nodes) {
    const double p = boost::math::legendre_p_prime(n, x);
    rule.weights.push_back(2.0 / ((1.0 - x * x) * p * p));
  }
  return cache.emplace(n, std::move(rule)).first->second;
}

namespace {

Complex integrate_once(const ContourPath& path, const Continuation& f, const GaussRule& rule, int panels) {
  Complex sum{};
  for (const PathPiece& piece : path.pieces()) {
    const double hs = 1.0 / panels;
    for (int p = 0; p < panels; ++p) {
      const double s0 = p * hs;
      for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
        const double s = s0 + 0.5 * hs * (rule.nodes[k] + 1.0);
        const Complex z = piece.point(s);
        sum += 0.5 * hs * rule.weights[k] * f(z) * piece.derivative(s);
      }
    }
  }
  return sum;
}

}  // namespace

ContourResult integrate(const ContourPath& path, const ContinuationFactory& integrand, const ContourOptions& options) {
  if (path.pieces().empty()) return {};
  const GaussRule& lo = gauss_legendre(options.order);
  const GaussRule& hi = gauss_legendre(2 * options.order);
  ContourResult out;
  for (int panels = options.initial_panels; panels <= options.max_panels; panels *= 2) {
    const Complex a = integrate_once(path, integrand(), lo, panels);
    const Complex b = integrate_once(path, integrand(), hi, panels);
    out.value = b;
    out.error_estimate = std::abs(b - a);
    out.panels = panels;
    if (out.error_estimate <= options.tolerance * std::max(1.0, std::abs(b))) break;
  }
  return out;
}

}  // namespace nadlab
