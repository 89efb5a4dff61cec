#include "qspan/asymptotics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "qspan/errors.hpp"
#include "qspan/quadrature.hpp"

namespace qspan {

namespace {
constexpr double kPi = std::numbers::pi;
constexpr double kSqrtPi = 1.0 / std::numbers::inv_sqrtpi;

void require_positive(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v)) throw DomainError(std::string(what) + " must be positive and finite");
}

void require_alpha(double alpha) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw DomainError("Renyi index alpha must be positive");
  if (alpha == 1.0) throw DomainError("alpha = 1 is the von Neumann entropy; use the von Neumann routine");
}
}  // namespace

CumulantSeries::CumulantSeries(std::vector<double> per_site, double length, int dim)
    : e_(std::move(per_site)), length_(length), dim_(dim) {
  if (e_.size() < 2) throw DomainError("CumulantSeries: need at least e_1 and e_2");
  if (!(e_[1] > 0.0) || !std::isfinite(e_[1])) throw DomainError("CumulantSeries: e_2 must be positive");
  require_positive(length, "CumulantSeries: L");
  if (dim < 1) throw DomainError("CumulantSeries: d must be >= 1");
}

double CumulantSeries::e(int n) const {
  if (n < 1 || n > static_cast<int>(e_.size())) throw DomainError("CumulantSeries::e: index out of range");
  return e_[n - 1];
}

double CumulantSeries::volume() const { return std::pow(length_, dim_); }
double CumulantSeries::sqrt_volume() const { return std::pow(length_, 0.5 * dim_); }
double CumulantSeries::omega() const { return std::sqrt(e2() / (2.0 * kPi)) * sqrt_volume(); }

CumulantSeries CumulantSeries::with_length(double length) const { return {e_, length, dim_}; }

RankQuery::RankQuery(double eps, double width, double window_start)
    : epsilon(eps), t(width), t0(window_start) {
  if (!(eps > 0.0 && eps < 1.0)) throw DomainError("RankQuery: epsilon must lie in (0, 1)");
  require_positive(width, "RankQuery: t");
}

// --- uniform window -------------------------------------------------------------

double moment_asymptotic(const CumulantSeries& cs, double t, double alpha) {
  require_positive(t, "moment_asymptotic: t");
  if (!(alpha > 0.0)) throw DomainError("moment_asymptotic: alpha must be positive");
  return std::pow(cs.omega() * t, 1.0 - alpha) / std::sqrt(alpha);
}

special::IntegralEstimate moment_correction(const CumulantSeries& cs, double t, int alpha, std::uint64_t seed) {
  require_positive(t, "moment_correction: t");
  if (alpha < 2) throw DomainError("moment_correction: alpha must be an integer >= 2");
  const special::IntegralEstimate j = special::correction_integral(alpha, seed);
  const double scale = -2.0 * std::pow(std::sqrt(cs.e2()) * t * cs.sqrt_volume(), -alpha);
  return {scale * j.value, std::abs(scale) * j.error};
}

double moment_with_correction(const CumulantSeries& cs, double t, int alpha, std::uint64_t seed) {
  return moment_asymptotic(cs, t, alpha) + moment_correction(cs, t, alpha, seed).value;
}

double renyi_asymptotic(const CumulantSeries& cs, double t, double alpha, bool with_correction,
                        std::uint64_t seed) {
  require_alpha(alpha);
  require_positive(t, "renyi_asymptotic: t");
  const double lead = std::log(cs.omega() * t) + std::log(alpha) / (2.0 * (alpha - 1.0));
  if (!with_correction) return lead;
  if (alpha != std::floor(alpha) || alpha < 2.0)
    throw DomainError("renyi_asymptotic: the correction is defined for integer alpha >= 2");
  const int a = static_cast<int>(alpha);
  const double delta = moment_correction(cs, t, a, seed).value / moment_asymptotic(cs, t, alpha);
  if (!(1.0 + delta > 0.0))
    throw DomainError("renyi_asymptotic: correction exceeds the leading term (L too small)");
  return lead + std::log1p(delta) / (1.0 - alpha);
}

double von_neumann_asymptotic(const CumulantSeries& cs, double t) {
  require_positive(t, "von_neumann_asymptotic: t");
  return std::log(cs.omega() * t) + 0.5;
}

double support_edge(const CumulantSeries& cs, double t) {
  require_positive(t, "support_edge: t");
  return 1.0 / (cs.omega() * t);
}

double pi_universal(double x) {
  if (!(x > 0.0)) throw DomainError("pi_universal: x must be positive");
  if (x == 1.0) throw SingularPointError("pi_universal: support edge x = 1");
  if (x > 1.0) return 0.0;
  return 1.0 / std::sqrt(-kPi * std::log(x));
}

double pi_mass_below(double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  return std::erfc(std::sqrt(-std::log(x)));
}

double pi_count_above(double x) {
  if (!(x > 0.0)) throw DomainError("pi_count_above: x must be positive");
  if (x >= 1.0) return 0.0;
  return 2.0 / kSqrtPi * std::sqrt(-std::log(x));
}

double eigenvalue_distribution(const CumulantSeries& cs, double t, double lambda) {
  require_positive(t, "eigenvalue_distribution: t");
  if (!(lambda > 0.0)) throw DomainError("eigenvalue_distribution: lambda must be positive");
  const double scale = cs.omega() * t;
  const double x = scale * lambda;
  if (x == 1.0) throw SingularPointError("eigenvalue_distribution: lambda at the support edge");
  if (x > 1.0) return 0.0;
  return scale * pi_universal(x) / lambda;
}

RankSolution solve_rank_system(const CumulantSeries& cs, const RankQuery& query) {
  const double u = special::erfc_inv(query.epsilon);
  RankSolution out;
  out.x_eps = std::exp(-u * u);
  out.lambda_eps = out.x_eps / (cs.omega() * query.t);
  out.dimension = std::sqrt(2.0 * cs.e2()) / kPi * u * cs.sqrt_volume() * query.t;
  return out;
}

double rank_small_eps(const CumulantSeries& cs, double t, double eps) {
  require_positive(t, "rank_small_eps: t");
  const double u = special::erf_inv_tail_expansion(eps);
  return std::sqrt(2.0 * cs.e2()) / kPi * u * cs.sqrt_volume() * t;
}

double rank_timesliced(const CumulantSeries& cs, double t, double delta_t, double eps_slice) {
  require_positive(t, "rank_timesliced: t");
  require_positive(delta_t, "rank_timesliced: delta_t");
  if (delta_t > t) throw DomainError("rank_timesliced: delta_t must not exceed t");
  const double eps = eps_slice * std::sqrt(delta_t / t);
  if (!(eps > 0.0 && eps < 1.0)) throw DomainError("rank_timesliced: effective epsilon outside (0, 1)");
  return solve_rank_system(cs, RankQuery(eps, t)).dimension;
}

double mandelstam_tamm_bound(const CumulantSeries& cs) {
  return kPi / (2.0 * std::sqrt(cs.e2()) * cs.sqrt_volume());
}

// --- weighted windows -----------------------------------------------------------

namespace {
constexpr double kWeightTol = 1e-10;

double integral_of_power(const WeightFunction& w, double alpha) {
  return w.integrate([&](double tau) {
    const double p = w(tau);
    return p > 0.0 ? std::pow(p, alpha) : 0.0;
  }, kWeightTol * std::pow(std::max(1.0, w.sup()), alpha) * w.width());
}

double differential_entropy(const WeightFunction& w) {
  return -w.integrate([&](double tau) {
    const double p = w(tau);
    return p > 0.0 ? p * std::log(p) : 0.0;
  }, kWeightTol);
}

// Subintervals of [0, t] where w > p, with flags marking ends that are
// crossings w = p (as opposed to knots or window ends).
struct Piece {
  double a, b;
  bool root_a, root_b;
};

std::vector<Piece> excess_pieces(const WeightFunction& w, double p) {
  const auto breaks = w.breakpoints();
  const int samples = w.kind() == WeightFunction::Kind::closure ? 64 : 1;
  std::vector<Piece> out;
  auto g = [&](double tau) { return w(tau) - p; };
  for (std::size_t s = 0; s + 1 < breaks.size(); ++s) {
    const double lo = breaks[s], hi = breaks[s + 1];
    // evaluate strictly inside so that jumps at knots do not leak across segments
    const double inset = 1e-14 * std::max(1.0, hi - lo);
    std::vector<double> pts{lo};
    for (int i = 1; i < samples; ++i) pts.push_back(lo + (hi - lo) * i / samples);
    pts.push_back(hi);
    auto value_at = [&](std::size_t i) {
      if (i == 0) return g(std::min(hi, lo + inset));
      if (i + 1 == pts.size()) return g(std::max(lo, hi - inset));
      return g(pts[i]);
    };
    std::vector<double> gv(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) gv[i] = value_at(i);
    // ends where w barely exceeds p get the root treatment as well
    const double near = 1e-3 * p;
    double start = 0.0;
    bool inside = gv[0] > 0.0, start_root = gv[0] < near || !(g(lo) > 0.0);
    if (inside) start = lo;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
      if ((gv[i] > 0.0) == (gv[i + 1] > 0.0)) continue;
      double a = pts[i], b = pts[i + 1];
      double ga = gv[i];
      for (int it = 0; it < 200 && b - a > 1e-15 * std::max(1.0, std::abs(a)); ++it) {
        const double m = 0.5 * (a + b);
        const double gm = g(m);
        if ((gm > 0.0) == (ga > 0.0)) { a = m; ga = gm; } else { b = m; }
      }
      const double root = 0.5 * (a + b);
      if (inside) {
        out.push_back({start, root, start_root, true});
        inside = false;
      } else {
        start = root;
        start_root = true;
        inside = true;
      }
    }
    if (inside) out.push_back({start, hi, start_root, gv.back() < near || !(g(hi) > 0.0)});
  }
  return out;
}

// Panels shrinking geometrically towards s = s_lo.
template <class F>
double graded_gauss(const F& f, double s_lo, double s_max, int order) {
  double sum = 0.0, hi = s_max;
  for (int k = 0; k < 400 && 0.25 * hi > s_lo; ++k) {
    const double lo = 0.25 * hi;
    sum += quad::composite_gauss(f, lo, hi, 1, order);
    hi = lo;
  }
  return sum + quad::composite_gauss(f, s_lo, hi, 1, order);
}

// \int dtau / sqrt(pi G(tau)) over `len` from an end where G = log(w/p) is
// zero or nearly so, in direction `dir`. tau = end + dir s^2 removes the
// singularity. Close to the end G is replaced by its linear model G0 + G' x,
// which integrates in closed form; G' comes from secants refined until they
// settle or G reaches rounding level. `floor` receives the error from
// locating the root itself: G is resolved to ~eps, so the root moves by
// eps / G' and the integral by a relative sqrt(eps / (G' len)).
template <class G>
double root_end_integral(const G& g, double end, double dir, double len, int order, double& floor) {
  const double s_max = std::sqrt(len);
  const double g_far = g(end + dir * 0.999 * len);
  const double g0 = std::max(0.0, g(end));
  double d = 1e-4 * len;
  double slope = (g(end + dir * d) - g0) / d;
  for (int it = 0; it < 400; ++it) {
    const double d2 = d / 16.0;
    const double rise = g(end + dir * d2) - g0;
    if (rise < 1e-7 || end + dir * d2 == end) break;
    const double next = rise / d2;
    const bool settled = std::abs(next / slope - 1.0) < 1e-6;
    slope = next;
    d = d2;
    if (settled) break;
  }
  auto f = [&](double s) {
    const double v = g(end + dir * s * s);
    return 2.0 * s / std::sqrt(kPi * (v > 0.0 ? v : g0 + std::max(slope, 0.0) * s * s));
  };
  if (!(slope > 0.0)) slope = (g_far - g0) / (0.999 * len);
  if (!(slope > 0.0)) return graded_gauss(f, 0.0, s_max, order);
  const double s_lin = std::min(s_max, std::sqrt(std::min(d, 1e-9 * g_far / slope)));
  const double inner = 2.0 * (std::sqrt(g0 + slope * s_lin * s_lin) - std::sqrt(g0)) / (slope * std::sqrt(kPi));
  const double rel = std::sqrt(16.0 * std::numeric_limits<double>::epsilon() / (slope * len));
  const double value = s_lin < s_max ? inner + graded_gauss(f, s_lin, s_max, order) : inner;
  floor += rel * value;
  return value;
}

template <class G>
double excess_piece_integral(const G& g, Piece piece, int order, double& floor) {
  if (piece.root_a && piece.root_b) {
    const double mid = 0.5 * (piece.a + piece.b);
    return excess_piece_integral(g, {piece.a, mid, true, false}, order, floor) +
           excess_piece_integral(g, {mid, piece.b, false, true}, order, floor);
  }
  const double len = piece.b - piece.a;
  if (piece.root_a) return root_end_integral(g, piece.a, 1.0, len, order, floor);
  if (piece.root_b) return root_end_integral(g, piece.b, -1.0, len, order, floor);
  return quad::composite_gauss([&](double tau) { return 1.0 / std::sqrt(kPi * g(tau)); }, piece.a, piece.b, 4, order);
}

double phi_scaled(const WeightFunction& w, double p) {
  auto g = [&](double tau) { return std::log(w(tau) / p); };
  double coarse = 0.0, fine = 0.0, floor = 0.0, unused = 0.0;
  for (const Piece& piece : excess_pieces(w, p)) {
    coarse += excess_piece_integral(g, piece, 12, unused);
    fine += excess_piece_integral(g, piece, 24, floor);
  }
  const double target = std::max(1e-8 * std::max(1.0, std::abs(fine)), floor);
  if (std::abs(fine - coarse) > target)
    throw AccuracyError("weighted distribution quadrature did not settle", std::abs(fine - coarse), target);
  return fine;
}

double weighted_count_above(const WeightFunction& w, double p, double omega) {
  // eigenvalues live in (0, 1], so p = Omega lambda is capped at Omega
  return 2.0 * omega / kSqrtPi * w.integrate([&](double tau) {
    const double top = std::min(w(tau), omega);
    if (!(top > p)) return 0.0;
    const double cap = w(tau) > omega ? std::sqrt(std::log(w(tau) / omega)) : 0.0;
    return std::sqrt(std::log(w(tau) / p)) - cap;
  }, 1e-12 * w.width());
}
}  // namespace

double weighted_moment(const CumulantSeries& cs, const WeightFunction& w, double alpha) {
  if (!(alpha > 0.0)) throw DomainError("weighted_moment: alpha must be positive");
  return std::pow(cs.omega(), 1.0 - alpha) / std::sqrt(alpha) * integral_of_power(w, alpha);
}

double weighted_renyi(const CumulantSeries& cs, const WeightFunction& w, double alpha) {
  require_alpha(alpha);
  return std::log(cs.omega()) + std::log(alpha) / (2.0 * (alpha - 1.0)) +
         std::log(integral_of_power(w, alpha)) / (1.0 - alpha);
}

double weighted_von_neumann(const CumulantSeries& cs, const WeightFunction& w) {
  return std::log(cs.omega()) + 0.5 + differential_entropy(w);
}

DistributionPoint weighted_distribution(const CumulantSeries& cs, const WeightFunction& w, double lambda) {
  if (!(lambda > 0.0)) throw DomainError("weighted_distribution: lambda must be positive");
  DistributionPoint out;
  out.lambda = lambda;
  out.scaled_p = cs.omega() * lambda;
  out.phi_density = out.scaled_p >= w.sup() ? 0.0 : phi_scaled(w, out.scaled_p);
  return out;
}

double weighted_mass_below(const WeightFunction& w, double p) {
  if (!(p > 0.0)) return 0.0;
  return w.integrate([&](double tau) {
    const double v = w(tau);
    if (v <= p) return v;
    return v * std::erfc(std::sqrt(std::log(v / p)));
  }, 1e-13);
}

WeightedRankSolution weighted_rank_system(const CumulantSeries& cs, const WeightFunction& w, double eps) {
  if (!(eps > 0.0 && eps < 1.0)) throw DomainError("weighted_rank_system: epsilon must lie in (0, 1)");
  // eps(p) increases from 0 at p -> 0 to 1 at p = sup w
  double hi = std::log(w.sup());
  double lo = hi - 700.0;
  if (weighted_mass_below(w, std::exp(lo)) > eps)
    throw DomainError("weighted_rank_system: epsilon below the resolvable range for this density");
  while (hi - lo > 1e-12 * std::max(1.0, std::abs(hi))) {
    const double mid = 0.5 * (lo + hi);
    if (weighted_mass_below(w, std::exp(mid)) < eps) lo = mid; else hi = mid;
  }
  WeightedRankSolution out;
  out.p_eps = std::exp(0.5 * (lo + hi));
  out.dimension = weighted_count_above(w, out.p_eps, cs.omega());
  return out;
}

}  // namespace qspan
