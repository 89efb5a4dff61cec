#include "qspan/quadrature.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <stdexcept>

namespace qspan::quad {

namespace {

Rule build_gauss_legendre(int n) {
  Rule r;
  r.nodes.resize(n);
  r.weights.resize(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    // Tricomi initial guess, then Newton on P_n.
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      const double pn = n == 1 ? x : p1;
      const double pnm1 = n == 1 ? 1.0 : p0;
      dp = n * (x * pn - pnm1) / (x * x - 1.0);
      const double dx = pn / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    // Recompute derivative at the converged node.
    double p0 = 1.0, p1 = x;
    for (int k = 2; k <= n; ++k) {
      const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    dp = n == 1 ? 1.0 : n * (x * p1 - p0) / (x * x - 1.0);
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    r.nodes[i] = -x;
    r.nodes[n - 1 - i] = x;
    r.weights[i] = w;
    r.weights[n - 1 - i] = w;
  }
  if (n % 2 == 1) r.nodes[n / 2] = 0.0;
  return r;
}

struct SimpsonState {
  const std::function<double(double)>& f;
  int evals = 0;
  bool converged = true;
};

double simpson_step(SimpsonState& s, double a, double b, double fa, double fm, double fb,
                    double whole, double tol, int depth, double& err) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = s.f(lm);
  const double frm = s.f(rm);
  s.evals += 2;
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0) {
    s.converged = false;
    err += std::abs(delta) / 15.0;
    return left + right + delta / 15.0;
  }
  if (std::abs(delta) <= 15.0 * tol) {
    err += std::abs(delta) / 15.0;
    return left + right + delta / 15.0;
  }
  return simpson_step(s, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, err) +
         simpson_step(s, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, err);
}

}  // namespace

const Rule& gauss_legendre(int n) {
  if (n < 1 || n > 512) throw std::invalid_argument("gauss_legendre: order out of range");
  static std::mutex mu;
  static std::map<int, std::unique_ptr<Rule>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<Rule>(build_gauss_legendre(n));
  return *slot;
}

Result adaptive_simpson(const std::function<double(double)>& f, double a, double b, double tol,
                        int max_depth) {
  if (a == b) return {};
  SimpsonState s{f};
  Result r;
  // Seed with a few bisections so that narrow features are not skipped.
  const int seed = 8;
  const double h = (b - a) / seed;
  for (int i = 0; i < seed; ++i) {
    const double lo = a + i * h;
    const double hi = i + 1 == seed ? b : lo + h;
    const double flo = f(lo), fhi = f(hi), fmid = f(0.5 * (lo + hi));
    const double w = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
    r.value += simpson_step(s, lo, hi, flo, fmid, fhi, w, tol / seed, max_depth, r.error);
  }
  r.converged = s.converged;
  return r;
}

Result adaptive_simpson(const std::function<double(double)>& f, std::span<const double> breaks,
                        double tol, int max_depth) {
  Result total;
  if (breaks.size() < 2) return total;
  const double span = breaks.back() - breaks.front();
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
    const double len = breaks[i + 1] - breaks[i];
    if (len <= 0.0) continue;
    const Result part = adaptive_simpson(f, breaks[i], breaks[i + 1], tol * len / span, max_depth);
    total.value += part.value;
    total.error += part.error;
    total.converged = total.converged && part.converged;
  }
  return total;
}

NodeSet composite_nodes(std::span<const double> breaks, int panels_per_segment, int order) {
  const Rule& rule = gauss_legendre(order);
  NodeSet ns;
  for (std::size_t s = 0; s + 1 < breaks.size(); ++s) {
    const double a = breaks[s], b = breaks[s + 1];
    if (b <= a) continue;
    const double h = (b - a) / panels_per_segment;
    for (int p = 0; p < panels_per_segment; ++p) {
      const double mid = a + (p + 0.5) * h;
      for (int i = 0; i < order; ++i) {
        ns.x.push_back(mid + 0.5 * h * rule.nodes[i]);
        ns.w.push_back(0.5 * h * rule.weights[i]);
      }
    }
  }
  return ns;
}

}  // namespace qspan::quad
