#pragma once

#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace qspan {

/// Probability density on the averaging window [0, t].
///
/// Three flavours share one evaluator contract: the uniform density 1/t, a
/// tabulated density on equally spaced nodes (linear interpolation), and an
/// arbitrary closure. Normalisation is checked on construction to 1e-10.
/// Evaluators must be reentrant; the object itself is immutable.
class WeightFunction {
 public:
  enum class Kind { uniform, tabulated, closure };

  static WeightFunction uniform(double t);
  /// `values` at t * i / (n - 1), i = 0..n-1. Must already integrate to 1.
  static WeightFunction tabulated(double t, std::vector<double> values);
  /// Same as tabulated() but rescales `values` to unit mass first.
  static WeightFunction tabulated_normalized(double t, std::vector<double> values);
  /// `breaks` (optional) lists interior points where the density has kinks
  /// or jumps; quadratures split there.
  static WeightFunction closure(double t, std::function<double(double)> density,
                                std::vector<double> breaks = {});

  /// Bundled densities by name: "uniform", "tent" (linear up to t/2 and back),
  /// "ramp" (2 tau / t^2), "hann" ((1 - cos 2 pi tau / t) / t).
  static WeightFunction named(std::string_view name, double t);

  double operator()(double tau) const;

  Kind kind() const noexcept { return kind_; }
  double width() const noexcept { return t_; }
  /// Sorted knots on [0, t] including both ends.
  std::span<const double> breakpoints() const noexcept { return breaks_; }
  /// Upper bound of the density (exact for uniform/tabulated, sampled for closures).
  double sup() const noexcept { return sup_; }
  std::string describe() const;

  /// \int_0^t g(wp(tau), tau) dtau by adaptive Simpson split at the knots.
  double integrate(const std::function<double(double)>& g, double tol = 1e-12) const;

 private:
  WeightFunction(Kind kind, double t, std::function<double(double)> eval, std::vector<double> breaks);
  void check_normalisation() const;

  Kind kind_;
  double t_;
  std::function<double(double)> eval_;
  std::vector<double> breaks_;
  double sup_ = 0.0;
};

}  // namespace qspan
