#pragma once

// Complex line integrals of multivalued integrands along piecewise paths.
// Integrands are supplied as stateful "continuations" that are called in
// path order, so square-root branches are followed continuously instead of
// being evaluated on the principal sheet.

#include <functional>
#include <vector>

#include "nadlab/core_linalg.hpp"

namespace nadlab {

struct PathPiece {
  enum class Kind { kSegment, kArc };
  Kind kind = Kind::kSegment;
  Complex a, b;        // segment endpoints
  Complex center;      // arc
  double radius = 0.0;
  double theta0 = 0.0, theta1 = 0.0;

  Complex point(double s) const;       // s in [0, 1]
  Complex derivative(double s) const;  // dz/ds
};

class ContourPath {
 public:
  ContourPath& segment(Complex a, Complex b);
  ContourPath& arc(Complex center, double radius, double theta0, double theta1);
  const std::vector<PathPiece>& pieces() const { return pieces_; }
  Complex start() const;
  Complex end() const;

 private:
  std::vector<PathPiece> pieces_;
};

/// Loop based at the origin that encircles z0 once counter-clockwise:
/// 0 -> Re z0 -> z0 - i r -> full circle -> back the same way.
ContourPath loop_around(Complex z0, double radius);

/// Called once per node in path order; returns the continued value there.
using Continuation = std::function<Complex(Complex)>;
/// Produces a fresh continuation (reset to the initial sheet) for each pass.
using ContinuationFactory = std::function<Continuation()>;

/// Continuation of sqrt(square(z)) choosing, at each call, the root closest
/// to the value extrapolated from the previous two nodes; the first call
/// takes the root closest to `hint`. Throws BranchDiscontinuity when neither
/// root is clearly closer (nodes too sparse or a path through a branch point).
Continuation sqrt_continuation(std::function<Complex(Complex)> square, Complex hint);

struct ContourResult {
  Complex value;
  /// |I(2n) - I(n)| from the order-doubled Gauss-Legendre rule.
  double error_estimate = 0.0;
  int panels = 0;
};

struct ContourOptions {
  int order = 20;          // Gauss-Legendre nodes per panel (doubled for the estimate)
  int initial_panels = 8;  // per piece
  int max_panels = 4096;
  double tolerance = 1e-12;
};

ContourResult integrate(const ContourPath& path, const ContinuationFactory& integrand,
                        const ContourOptions& options = {});

/// Ascending Gauss-Legendre nodes and weights on [-1, 1].
struct GaussRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};
const GaussRule& gauss_legendre(int n);

}  // namespace nadlab
