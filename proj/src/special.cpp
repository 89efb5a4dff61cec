#include "qspan/special.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "qspan/errors.hpp"
#include "qspan/quadrature.hpp"
#include "qspan/rng.hpp"

namespace qspan {

Tolerance::Tolerance(double abs_tol, double rel_tol) : abs(abs_tol), rel(rel_tol) {
  if (!(abs_tol >= 0.0) || !(rel_tol >= 0.0) || (abs_tol == 0.0 && rel_tol == 0.0))
    throw DomainError("Tolerance: need abs >= 0, rel >= 0, and one of them positive");
}

double Tolerance::bound(double reference) const { return abs + rel * std::abs(reference); }

bool Tolerance::accepts(double value, double reference) const {
  return std::abs(value - reference) <= bound(reference);
}

namespace special {

namespace {
constexpr double kTwoOverSqrtPi = 2.0 * std::numbers::inv_sqrtpi;

// erfc(x) = eps for x >= 0, with eps in (0, 1].
double solve_erfc(double eps) {
  if (eps == 1.0) return 0.0;
  // Seed: tail expansion where it is defined, linear Taylor otherwise.
  double x;
  const double big = std::log(2.0 / (std::numbers::pi * eps * eps));
  if (big > 1.0) {
    x = std::sqrt(0.5 * (big - std::log(big)));
  } else {
    x = (1.0 - eps) / kTwoOverSqrtPi;
  }
  double lo = 0.0, hi = 27.3;  // erfc(27.3) underflows
  bool ok = false;
  for (int it = 0; it < 60; ++it) {
    const double r = (1.0 - eps) <= 0.5 ? (std::erf(x) - (1.0 - eps)) : (eps - std::erfc(x));
    // r > 0  <=>  x too large
    if (r > 0.0) hi = std::min(hi, x); else lo = std::max(lo, x);
    const double d = kTwoOverSqrtPi * std::exp(-x * x);
    if (d == 0.0) break;
    const double step = r / d;
    const double next = x - step / (1.0 + x * step);  // Halley, erf'' = -2x erf'
    if (!std::isfinite(next) || next <= lo || next >= hi) {
      if (hi - lo < 1e-15 * std::max(1.0, x)) { ok = true; break; }
      x = 0.5 * (lo + hi);
      continue;
    }
    if (std::abs(next - x) <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, x)) {
      x = next;
      ok = true;
      break;
    }
    x = next;
  }
  if (!ok) {
    for (int it = 0; it < 200 && hi - lo > 1e-16 * std::max(1.0, lo); ++it) {
      const double mid = 0.5 * (lo + hi);
      if (std::erfc(mid) < eps) hi = mid; else lo = mid;
    }
    x = 0.5 * (lo + hi);
  }
  return x;
}

}  // namespace

double erf(double x) { return std::erf(x); }
double erfc(double x) { return std::erfc(x); }

double erf_inv(double y) {
  if (!(std::abs(y) < 1.0)) throw DomainError("erf_inv: argument must lie in (-1, 1)");
  if (y == 0.0) return 0.0;
  const double x = solve_erfc(1.0 - std::abs(y));
  return y < 0.0 ? -x : x;
}

double erfc_inv(double eps) {
  if (!(eps > 0.0 && eps < 2.0)) throw DomainError("erfc_inv: argument must lie in (0, 2)");
  if (eps <= 1.0) return solve_erfc(eps);
  return -solve_erfc(2.0 - eps);
}

double erf_inv_tail_expansion(double eps) {
  if (!(eps > 0.0 && eps < 1.0)) throw DomainError("erf_inv_tail_expansion: eps must lie in (0, 1)");
  const double big = std::log(2.0 / (std::numbers::pi * eps * eps));
  if (!(big > 1.0)) throw DomainError("erf_inv_tail_expansion: eps too large for the expansion");
  return std::sqrt(0.5 * (big - std::log(big)));
}

double normal_quantile(double u) {
  if (!(u > 0.0 && u < 1.0)) throw DomainError("normal_quantile: u must lie in (0, 1)");
  return -std::numbers::sqrt2 * erfc_inv(2.0 * u);
}

double polylog_half_branch(double x) {
  if (!(x > 0.0)) throw DomainError("polylog_half_branch: x must be positive");
  if (x == 1.0) throw SingularPointError("polylog_half_branch: branch point x = 1");
  if (x < 1.0) return 0.0;
  return 1.0 / (std::numbers::inv_sqrtpi * std::sqrt(std::log(x)));
}

namespace {

// Q(y) with the max coordinate pinned at 1 and the others at u.
double ring_form(std::span<const double> y) {
  const std::size_t n = y.size();
  double q = y[0] * y[0] + y[n - 1] * y[n - 1];
  for (std::size_t j = 0; j + 1 < n; ++j) q += (y[j] - y[j + 1]) * (y[j] - y[j + 1]);
  return q;
}

// Tensor Gauss-Legendre on [0,1]^{n-1} for each choice of the maximal
// coordinate; the radial integral is done in closed form.
double correction_quadrature(int alpha, int m) {
  const int n = alpha - 1;
  const int dim = n - 1;
  const double radial = 0.5 * std::tgamma(0.5 * alpha);
  if (dim == 0) return 0.5 * alpha * radial * std::pow(2.0 / 2.0, 0.5 * alpha);
  const quad::Rule& rule = quad::gauss_legendre(m);
  std::vector<double> x(m), w(m);
  for (int i = 0; i < m; ++i) {
    x[i] = 0.5 * (rule.nodes[i] + 1.0);
    w[i] = 0.5 * rule.weights[i];
  }
  std::vector<int> idx(dim, 0);
  std::vector<double> y(n);
  double total = 0.0;
  for (int k = 0; k < n; ++k) {
    std::fill(idx.begin(), idx.end(), 0);
    while (true) {
      double weight = 1.0;
      for (int j = 0, c = 0; j < n; ++j) {
        if (j == k) {
          y[j] = 1.0;
        } else {
          y[j] = x[idx[c]];
          weight *= w[idx[c]];
          ++c;
        }
      }
      total += weight * std::pow(2.0 / ring_form(y), 0.5 * alpha);
      int c = 0;
      while (c < dim && ++idx[c] == m) idx[c++] = 0;
      if (c == dim) break;
    }
  }
  return 0.5 * alpha * radial * total;
}

IntegralEstimate correction_monte_carlo(int alpha, std::uint64_t seed, std::int64_t pairs) {
  const int n = alpha - 1;
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  for (int j = 0; j < n; ++j) {
    a(j, j) = 2.0;
    if (j + 1 < n) a(j, j + 1) = a(j + 1, j) = -1.0;
  }
  const Eigen::MatrixXd cov = a.inverse();
  const Eigen::MatrixXd chol = cov.llt().matrixL();
  // det(a) = alpha for the ring form
  const double norm = std::pow(2.0 * std::numbers::pi, 0.5 * n) / std::sqrt(static_cast<double>(alpha));

  Eigen::VectorXd z(n), y(n);
  double sum = 0.0, sum_sq = 0.0;
  for (std::int64_t i = 0; i < pairs; ++i) {
    // first coordinate stratified over `pairs` equal-probability strata
    const double u0 = (static_cast<double>(i) + counter_uniform(seed, i, 0)) / static_cast<double>(pairs);
    z(0) = normal_quantile(u0);
    for (int c = 1; c < n; ++c) z(c) = normal_quantile(counter_uniform(seed, i, c));
    y.noalias() = chol * z;
    // antithetic partner -y
    const double h = 0.5 * (std::max(0.0, y.maxCoeff()) + std::max(0.0, -y.minCoeff()));
    sum += h;
    sum_sq += h * h;
  }
  const double np = static_cast<double>(pairs);
  const double mean = sum / np;
  const double var = std::max(0.0, sum_sq / np - mean * mean);
  return {norm * mean, norm * std::sqrt(var / (np - 1.0))};
}

}  // namespace

IntegralEstimate correction_integral(int alpha, std::uint64_t seed, CorrectionMethod method,
                                     std::int64_t mc_pairs) {
  if (alpha < 2) throw DomainError("correction_integral: alpha must be >= 2");
  if (method == CorrectionMethod::automatic)
    method = alpha <= 4 ? CorrectionMethod::quadrature : CorrectionMethod::monte_carlo;
  if (method == CorrectionMethod::monte_carlo) {
    if (mc_pairs < 16) throw DomainError("correction_integral: too few Monte Carlo samples");
    return correction_monte_carlo(alpha, seed, mc_pairs);
  }
  if (alpha > 6) throw DomainError("correction_integral: tensor quadrature limited to alpha <= 6");
  int m = alpha <= 4 ? 16 : 10;
  double prev = correction_quadrature(alpha, m);
  const int m_max = alpha <= 4 ? 128 : 32;
  while (true) {
    const int next_m = std::min(2 * m, m_max);
    if (next_m == m) break;
    const double cur = correction_quadrature(alpha, next_m);
    const double diff = std::abs(cur - prev);
    prev = cur;
    m = next_m;
    if (diff <= 1e-14 * std::abs(cur)) return {cur, std::max(diff, 1e-16 * std::abs(cur))};
    if (m == m_max) return {cur, diff};
  }
  return {prev, 0.0};
}

}  // namespace special
}  // namespace qspan
