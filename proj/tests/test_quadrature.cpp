#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <cmath>
#include <numbers>

#include "qspan/errors.hpp"
#include "qspan/quadrature.hpp"
#include "qspan/weight_function.hpp"

using namespace qspan;

TEST_CASE("Gauss-Legendre nodes match boost's tabulated rules") {
  const auto& r = quad::gauss_legendre(15);
  const auto& ref = boost::math::quadrature::gauss<double, 15>::abscissa();
  const auto& refw = boost::math::quadrature::gauss<double, 15>::weights();
  // boost stores the non-negative half, node 0 first
  for (std::size_t i = 0; i < ref.size(); ++i) {
    bool found = false;
    for (std::size_t j = 0; j < r.nodes.size(); ++j)
      if (std::abs(r.nodes[j] - ref[i]) < 1e-14) {
        CHECK(r.weights[j] == doctest::Approx(refw[i]).epsilon(1e-13));
        found = true;
      }
    CHECK(found);
  }
}

TEST_CASE("Gauss-Legendre is exact to degree 2n-1") {
  for (int n : {1, 2, 5, 16, 24}) {
    const auto& r = quad::gauss_legendre(n);
    for (int deg = 0; deg <= 2 * n - 1; ++deg) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += r.weights[i] * std::pow(r.nodes[i], deg);
      const double exact = deg % 2 ? 0.0 : 2.0 / (deg + 1);
      CHECK(s == doctest::Approx(exact).epsilon(1e-13).scale(1.0));
    }
  }
}

TEST_CASE("adaptive Simpson agrees with Gauss-Kronrod") {
  auto f = [](double x) { return std::exp(-x) * std::cos(5.0 * x) + std::sqrt(x + 0.1); };
  const double ref = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, 0.0, 3.0, 15, 1e-14);
  const auto r = quad::adaptive_simpson(f, 0.0, 3.0, 1e-11);
  CHECK(r.converged);
  CHECK(r.value == doctest::Approx(ref).epsilon(1e-10));
  const double breaks[] = {0.0, 1.0, 2.5, 3.0};
  CHECK(quad::adaptive_simpson(f, breaks, 1e-11).value == doctest::Approx(ref).epsilon(1e-10));
}

TEST_CASE("composite rules") {
  auto f = [](double x) { return std::sin(x) * std::sin(x); };
  CHECK(quad::composite_gauss(f, 0.0, std::numbers::pi, 4) == doctest::Approx(std::numbers::pi / 2).epsilon(1e-14));
  const double breaks[] = {0.0, 0.3, 2.0};
  const auto nodes = quad::composite_nodes(breaks, 3, 8);
  double mass = 0.0, first = 0.0;
  for (std::size_t i = 0; i < nodes.x.size(); ++i) {
    mass += nodes.w[i];
    first += nodes.w[i] * nodes.x[i];
  }
  CHECK(nodes.x.size() == 2 * 3 * 8);
  CHECK(mass == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(first == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("weight functions are normalised densities") {
  boost::math::quadrature::tanh_sinh<double> ts;
  for (const char* name : {"uniform", "tent", "ramp", "hann"}) {
    const WeightFunction w = WeightFunction::named(name, 2.5);
    CHECK(w.width() == 2.5);
    const auto knots = w.breakpoints();
    double mass = 0.0;
    for (std::size_t i = 0; i + 1 < knots.size(); ++i)
      mass += ts.integrate([&](double x) { return w(x); }, knots[i], knots[i + 1], 1e-13);
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(w(-0.1) == 0.0);
    CHECK(w(2.6) == 0.0);
    for (double x = 0.0; x <= 2.5; x += 0.1) CHECK(w(x) <= w.sup() * (1.0 + 1e-12));
  }
  CHECK_THROWS_AS(WeightFunction::named("box", 1.0), DomainError);
  CHECK_THROWS_AS(WeightFunction::uniform(0.0), DomainError);
}

TEST_CASE("tabulated densities") {
  const WeightFunction w = WeightFunction::tabulated_normalized(2.0, {1.0, 3.0, 1.0});
  CHECK(w(1.0) == doctest::Approx(0.75));
  CHECK(w(0.5) == doctest::Approx(0.5));
  CHECK(w.breakpoints().size() == 3);
  CHECK_THROWS_AS(WeightFunction::tabulated(2.0, {1.0, 3.0, 1.0}), DomainError);
  CHECK_THROWS_AS(WeightFunction::tabulated(2.0, {1.0, -1.0, 1.0}), DomainError);
  CHECK_THROWS_AS(WeightFunction::closure(1.0, [](double) { return 2.0; }), DomainError);
}
