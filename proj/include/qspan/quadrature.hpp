#pragma once

#include <functional>
#include <span>
#include <vector>

namespace qspan::quad {

struct Rule {
  std::vector<double> nodes;    // on [-1, 1]
  std::vector<double> weights;
};

/// n-point Gauss-Legendre rule on [-1, 1]. Rules are cached per n.
const Rule& gauss_legendre(int n);

struct Result {
  double value = 0.0;
  double error = 0.0;
  bool converged = true;
};

/// Adaptive Simpson on [a, b] with absolute target `tol`.
Result adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                        double tol, int max_depth = 48);

/// Adaptive Simpson over consecutive segments of `breaks` (sorted, size >= 2).
/// The tolerance is shared out in proportion to segment length.
Result adaptive_simpson(const std::function<double(double)>& f, std::span<const double> breaks,
                        double tol, int max_depth = 48);

/// Composite Gauss-Legendre: `panels` equal panels on [a, b], `order` nodes each.
template <class F>
auto composite_gauss(F&& f, double a, double b, int panels, int order = 16) {
  const Rule& rule = gauss_legendre(order);
  const double h = (b - a) / panels;
  using T = decltype(f(a));
  T sum{};
  for (int p = 0; p < panels; ++p) {
    const double mid = a + (p + 0.5) * h;
    T part{};
    for (int i = 0; i < order; ++i) part += rule.weights[i] * f(mid + 0.5 * h * rule.nodes[i]);
    sum += part * (0.5 * h);
  }
  return sum;
}

/// Nodes and weights of a composite Gauss-Legendre rule, for reuse across
/// many integrands sharing the same measure.
struct NodeSet {
  std::vector<double> x;
  std::vector<double> w;
};
NodeSet composite_nodes(std::span<const double> breaks, int panels_per_segment, int order = 16);

}  // namespace qspan::quad
