#pragma once

#include <cstdint>

namespace qspan {

/// Absolute/relative tolerance pair. At least one component must be positive.
struct Tolerance {
  double abs = 0.0;
  double rel = 0.0;

  Tolerance() = default;
  Tolerance(double abs_tol, double rel_tol);

  /// True when |value - reference| is within abs + rel * |reference|.
  bool accepts(double value, double reference) const;
  double bound(double reference) const;
};

namespace special {

double erf(double x);
double erfc(double x);

/// Inverse error function on (-1, 1). Throws DomainError for |y| >= 1.
///
/// Halley/Newton iteration on erfc in the tails (so that 1 - y close to
/// machine epsilon keeps full relative accuracy), seeded by the asymptotic
/// tail expansion, with a bisection fallback if an iterate leaves the bracket.
double erf_inv(double y);

/// erf_inv(1 - eps) computed from eps directly; accurate for tiny eps.
double erfc_inv(double eps);

/// Leading asymptotic form of erf_inv(1 - eps) for eps << 1:
///   sqrt((log(2/(pi eps^2)) - log log(2/(pi eps^2))) / 2).
/// Throws DomainError unless 0 < eps < 1 and log(2/(pi eps^2)) > 1.
double erf_inv_tail_expansion(double eps);

/// Standard normal quantile, built on erf_inv.
double normal_quantile(double u);

/// Im Li_{1/2}(x + i0+) for real x > 0: sqrt(pi / log x) above the branch
/// point x = 1 and zero below it. Throws SingularPointError at x == 1.
double polylog_half_branch(double x);

enum class CorrectionMethod { automatic, quadrature, monte_carlo };

struct IntegralEstimate {
  double value = 0.0;
  double error = 0.0;  // quadrature difference or one Monte Carlo standard error
};

/// Gaussian integral controlling the O(L^{-d/2}) correction to tr[rho^alpha]:
///
///   J_alpha = \int_{R^{alpha-1}} max(0, y_1, ..., y_{alpha-1}) e^{-Q(y)/2} dy,
///   Q(y)    = y_1^2 + sum_j (y_j - y_{j+1})^2 + y_{alpha-1}^2,
///
/// i.e. the mean range of alpha points on a ring with Gaussian bonds, halved.
/// J_2 = 1/2 and J_3 = sqrt(pi). Deterministic tensor
/// Gauss-Legendre quadrature for alpha <= 4 by default, seeded Monte Carlo
/// (Gaussian importance sampling, stratified + antithetic) above.
IntegralEstimate correction_integral(int alpha, std::uint64_t seed = 0,
                                     CorrectionMethod method = CorrectionMethod::automatic,
                                     std::int64_t mc_pairs = (1 << 18));

}  // namespace special
}  // namespace qspan
