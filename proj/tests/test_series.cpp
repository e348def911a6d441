#include <doctest.h>

#include <cmath>

#include "nadlab/series.hpp"

using namespace nadlab;

TEST_SUITE("series") {
  TEST_CASE("elementary functions reproduce known Taylor coefficients") {
    const TaylorSeries x = TaylorSeries::variable(0.3, 8);
    const TaylorSeries e = exp(x);
    double fact = 1.0;
    for (int n = 0; n <= 8; ++n) {
      if (n) fact *= n;
      CHECK(std::abs(e[n] - std::exp(0.3) / fact) < 1e-14);
    }
    const TaylorSeries t = tanh(x);
    const double th = std::tanh(0.3);
    CHECK(std::abs(t[1] - (1.0 - th * th)) < 1e-14);
    CHECK(std::abs(t[2] - (-th * (1.0 - th * th))) < 1e-14);
  }

  TEST_CASE("reciprocal and square root are inverse operations") {
    const TaylorSeries x = TaylorSeries::variable(0.7, 10);
    const TaylorSeries q = 1.0 + x * x;
    const TaylorSeries one = q * reciprocal(q);
    CHECK(std::abs(one[0] - 1.0) < 1e-14);
    for (int n = 1; n <= 10; ++n) CHECK(std::abs(one[n]) < 1e-13);
    const TaylorSeries r = sqrt(q);
    const TaylorSeries back = r * r - q;
    for (int n = 0; n <= 10; ++n) CHECK(std::abs(back[n]) < 1e-13);
    CHECK(std::abs(sqrt_near(q, -1.0)[0] + std::sqrt(1.49)) < 1e-14);
  }

  TEST_CASE("derivative lowers the degree") {
    const TaylorSeries x = TaylorSeries::variable(0.0, 4);
    const TaylorSeries d = (x * x * x).derivative();
    CHECK(d.degree() == 3);
    CHECK(std::abs(d[2] - 3.0) < 1e-15);
  }
}
