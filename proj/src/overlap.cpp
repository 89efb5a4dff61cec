#include "qspan/overlap.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <numbers>
#include <numeric>
#include <sstream>

#include "qspan/errors.hpp"
#include "qspan/quadrature.hpp"
#include "qspan/rng.hpp"
#include "qspan/special.hpp"

namespace qspan {

namespace {
constexpr double kPi = std::numbers::pi;
}

IsingQuench::IsingQuench(double h_initial, double h_final, double coupling, int grid)
    : h_i(h_initial), h_f(h_final), J(coupling), k_grid(grid) {
  if (std::isnan(h_i) || (std::isinf(h_i) && h_i < 0)) throw DomainError("IsingQuench: h_i must be real or +inf");
  if (!std::isfinite(h_f)) throw DomainError("IsingQuench: h_f must be finite");
  if (!(J > 0.0) || !std::isfinite(J)) throw DomainError("IsingQuench: J must be positive");
  if (k_grid < 64) throw DomainError("IsingQuench: k_grid must be >= 64");
}

ModeData ising_dispersion(const IsingQuench& q, double k) {
  if (!(k >= -1e-12 && k <= kPi + 1e-12)) throw DomainError("ising_dispersion: k must lie in [0, pi]");
  const double ck = std::cos(k), sk = std::sin(k);
  const double sf = std::sqrt(std::max(0.0, 1.0 + q.h_f * q.h_f - 2.0 * q.h_f * ck));
  ModeData m;
  m.eps_k = 2.0 * q.J * sf;
  if (sf == 0.0) {
    m.singular = true;
    m.cos_delta_k = 1.0;
    return m;
  }
  double c;
  if (q.h_i == q.h_f) {
    c = 1.0;
  } else if (q.initial_polarised()) {
    c = (q.h_f - ck) / sf;
  } else {
    const double si = std::sqrt(std::max(0.0, 1.0 + q.h_i * q.h_i - 2.0 * q.h_i * ck));
    if (si == 0.0) {
      m.singular = true;
      m.cos_delta_k = 1.0;
      return m;
    }
    c = ((q.h_f - ck) * (q.h_i - ck) + sk * sk) / (sf * si);
  }
  m.cos_delta_k = std::clamp(c, -1.0, 1.0);
  return m;
}

namespace {

struct Mode {
  double eps;
  double a;   // (1 + cos D) / 2
  double b;   // (1 - cos D) / 2
  double s2;  // sin^2 D
  double w;   // trapezoid weight, including 1/2pi
};

std::vector<Mode> ising_modes(const IsingQuench& q) {
  const int n = q.k_grid;
  const double h = kPi / n;
  std::vector<Mode> modes(n + 1);
  for (int j = 0; j <= n; ++j) {
    const ModeData md = ising_dispersion(q, std::min(kPi, h * j));
    const double c = md.cos_delta_k;
    const double a = 0.5 * (1.0 + c), b = 0.5 * (1.0 - c);
    const double w = (j == 0 || j == n ? 0.5 : 1.0) * h / (2.0 * kPi);
    modes[j] = {md.eps_k, a, b, (1.0 - c) * (1.0 + c), w};
  }
  return modes;
}

IsingFValue ising_sum(const std::vector<Mode>& modes, double t) {
  double re = 0.0, im = 0.0;
  bool crossing = false;
  double prev_x = 1.0, prev_y = 0.0;
  for (std::size_t j = 0; j < modes.size(); ++j) {
    const Mode& m = modes[j];
    const double phi = 2.0 * m.eps * t;
    const double sh = std::sin(0.5 * phi);
    const double x = m.a + m.b * std::cos(phi);
    const double y = m.b * std::sin(phi);
    re += m.w * 0.5 * std::log1p(-m.s2 * sh * sh);
    im += m.w * std::atan2(y, x);
    if (j > 0 && x < 0.0 && prev_x < 0.0 && ((y >= 0.0) != (prev_y >= 0.0))) crossing = true;
    prev_x = x;
    prev_y = y;
  }
  return {cplx(-re, -im), crossing};
}

}  // namespace

IsingFValue ising_f_checked(const IsingQuench& q, double t) {
  if (!std::isfinite(t)) throw DomainError("ising_f: t must be finite");
  return ising_sum(ising_modes(q), t);
}

cplx ising_f(const IsingQuench& q, double t) { return ising_f_checked(q, t).value; }

// --- DynamicalFreeEnergy ----------------------------------------------------------

DynamicalFreeEnergy::DynamicalFreeEnergy(Kind kind, std::function<cplx(double)> positive_branch)
    : kind_(kind), eval_(std::move(positive_branch)) {}

DynamicalFreeEnergy DynamicalFreeEnergy::ising(const IsingQuench& q) {
  auto modes = std::make_shared<const std::vector<Mode>>(ising_modes(q));
  DynamicalFreeEnergy f(Kind::ising_quench, [modes](double t) { return ising_sum(*modes, t).value; });
  f.quench_ = q;
  f.trivial_ = std::all_of(modes->begin(), modes->end(), [](const Mode& m) { return m.s2 == 0.0 || m.eps == 0.0; });
  return f;
}

DynamicalFreeEnergy DynamicalFreeEnergy::cumulants(std::vector<double> per_site) {
  if (per_site.empty()) throw DomainError("DynamicalFreeEnergy::cumulants: empty cumulant list");
  for (double e : per_site)
    if (!std::isfinite(e)) throw DomainError("DynamicalFreeEnergy::cumulants: non-finite cumulant");
  auto coeffs = std::make_shared<std::vector<cplx>>();
  // -i^n / n!
  static const std::array<cplx, 4> ipow{cplx(1, 0), cplx(0, 1), cplx(-1, 0), cplx(0, -1)};
  double fact = 1.0;
  for (std::size_t n = 1; n <= per_site.size(); ++n) {
    fact *= static_cast<double>(n);
    coeffs->push_back(-ipow[n % 4] * (per_site[n - 1] / fact));
  }
  DynamicalFreeEnergy f(Kind::cumulant_truncation, [coeffs](double t) {
    cplx acc = 0.0;
    for (std::size_t n = coeffs->size(); n-- > 0;) acc = (acc + (*coeffs)[n]) * t;
    return acc;
  });
  f.trivial_ = std::all_of(per_site.begin(), per_site.end(), [](double e) { return e == 0.0; });
  f.cumulants_ = std::move(per_site);
  return f;
}

DynamicalFreeEnergy DynamicalFreeEnergy::tabulated(std::vector<double> times, std::vector<cplx> values) {
  if (times.size() != values.size()) throw DomainError("DynamicalFreeEnergy::tabulated: size mismatch");
  if (times.size() < 4) throw DomainError("DynamicalFreeEnergy::tabulated: need at least four samples");
  if (times.front() != 0.0) throw DomainError("DynamicalFreeEnergy::tabulated: first time must be 0");
  if (std::abs(values.front()) > 1e-12) throw DomainError("DynamicalFreeEnergy::tabulated: f(0) must vanish");
  for (std::size_t i = 1; i < times.size(); ++i)
    if (!(times[i] > times[i - 1])) throw DomainError("DynamicalFreeEnergy::tabulated: times must increase");
  for (const cplx& v : values)
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
      throw DomainError("DynamicalFreeEnergy::tabulated: non-finite sample");
  const double t_max = times.back();
  const bool zero = std::all_of(values.begin(), values.end(), [](const cplx& v) { return v == cplx(0.0); });
  auto ts = std::make_shared<const std::vector<double>>(std::move(times));
  auto vs = std::make_shared<const std::vector<cplx>>(std::move(values));
  DynamicalFreeEnergy f(Kind::tabulated, [ts, vs](double t) {
    const auto& x = *ts;
    const auto& y = *vs;
    if (t > x.back()) throw DomainError("DynamicalFreeEnergy: time beyond the tabulated range");
    const std::size_t n = x.size();
    std::size_t hi = std::upper_bound(x.begin(), x.end(), t) - x.begin();
    // four-point stencil centred on the bracketing interval
    std::size_t lo = hi >= 2 ? hi - 2 : 0;
    lo = std::min(lo, n - 4);
    cplx acc = 0.0;
    for (std::size_t i = lo; i < lo + 4; ++i) {
      double l = 1.0;
      for (std::size_t j = lo; j < lo + 4; ++j)
        if (j != i) l *= (t - x[j]) / (x[i] - x[j]);
      acc += l * y[i];
    }
    return acc;
  });
  f.max_time_ = t_max;
  f.trivial_ = zero;
  return f;
}

cplx DynamicalFreeEnergy::operator()(double t) const {
  if (t == 0.0) return 0.0;
  if (std::abs(t) > max_time_) throw DomainError("DynamicalFreeEnergy: |t| beyond the evaluable range");
  return t > 0.0 ? eval_(t) : std::conj(eval_(-t));
}

std::string DynamicalFreeEnergy::describe() const {
  std::ostringstream os;
  os.precision(17);
  switch (kind_) {
    case Kind::ising_quench:
      os << "ising_quench(h_i=" << quench_->h_i << ", h_f=" << quench_->h_f << ", J=" << quench_->J
         << ", k_grid=" << quench_->k_grid << ")";
      break;
    case Kind::cumulant_truncation:
      os << "cumulant_truncation(";
      for (std::size_t i = 0; i < cumulants_.size(); ++i) os << (i ? ", " : "") << "e" << i + 1 << "=" << cumulants_[i];
      os << ")";
      break;
    case Kind::tabulated: os << "tabulated(t_max=" << max_time_ << ")"; break;
  }
  return os.str();
}

double second_cumulant_from_f(const DynamicalFreeEnergy& f, double h0, int levels) {
  if (!(h0 > 0.0)) throw DomainError("second_cumulant_from_f: h0 must be positive");
  if (levels < 2 || levels > 12) throw DomainError("second_cumulant_from_f: levels must lie in [2, 12]");
  h0 = std::min(h0, 0.5 * f.max_time());
  std::vector<std::vector<double>> r(levels);
  double h = h0;
  for (int i = 0; i < levels; ++i, h *= 0.5) {
    r[i].resize(i + 1);
    r[i][0] = 2.0 * f(h).real() / (h * h);
    double four = 1.0;
    for (int j = 1; j <= i; ++j) {
      four *= 4.0;
      r[i][j] = r[i][j - 1] + (r[i][j - 1] - r[i - 1][j - 1]) / (four - 1.0);
    }
  }
  const double best = r[levels - 1][levels - 1];
  const double prev = r[levels - 2][levels - 2];
  const double err = std::abs(best - prev);
  if (err > 1e-6 * std::max(1.0, std::abs(best)))
    throw AccuracyError("second_cumulant_from_f: Richardson table did not settle", err, 1e-6);
  return best;
}

// --- finite-L moments ---------------------------------------------------------------

namespace {

// Piecewise Chebyshev interpolant of f on [0, t] (second-kind points,
// barycentric evaluation), checked against f between the nodes.
class ChebyshevTable {
 public:
  ChebyshevTable(const DynamicalFreeEnergy& f, double t) : t_(t) {
    double scale = 1.0;
    for (int panels = 2; panels <= 1024; panels *= 2) {
      build(f, panels);
      double worst = 0.0;
      for (const cplx& v : values_) scale = std::max(scale, std::abs(v));
      const double h = t_ / panels_;
      for (int p = 0; p < panels_; ++p)
        for (int j = 0; j < kOrder; ++j) {
          const double x = p * h + h * 0.5 * (1.0 - std::cos(kPi * (j + 0.5) / kOrder));
          worst = std::max(worst, std::abs(eval(x) - f(x)));
        }
      if (worst <= 1e-14 * scale) {
        ok_ = true;
        return;
      }
    }
  }

  bool ok() const noexcept { return ok_; }

  cplx eval(double x) const {
    const double h = t_ / panels_;
    int p = std::min(panels_ - 1, static_cast<int>(x / h));
    p = std::max(p, 0);
    // local coordinate on [-1, 1]
    const double u = 2.0 * (x - p * h) / h - 1.0;
    const cplx* v = &values_[static_cast<std::size_t>(p) * (kOrder + 1)];
    cplx num = 0.0;
    double den = 0.0;
    for (int j = 0; j <= kOrder; ++j) {
      const double d = u - nodes_[j];
      if (d == 0.0) return v[j];
      const double c = bary_[j] / d;
      num += c * v[j];
      den += c;
    }
    return num / den;
  }

 private:
  static constexpr int kOrder = 24;

  void build(const DynamicalFreeEnergy& f, int panels) {
    panels_ = panels;
    nodes_.resize(kOrder + 1);
    bary_.resize(kOrder + 1);
    for (int j = 0; j <= kOrder; ++j) {
      nodes_[j] = -std::cos(kPi * j / kOrder);
      bary_[j] = (j % 2 ? -1.0 : 1.0) * (j == 0 || j == kOrder ? 0.5 : 1.0);
    }
    values_.assign(static_cast<std::size_t>(panels) * (kOrder + 1), 0.0);
    const double h = t_ / panels;
    for (int p = 0; p < panels; ++p)
      for (int j = 0; j <= kOrder; ++j)
        values_[static_cast<std::size_t>(p) * (kOrder + 1) + j] = f(p * h + 0.5 * h * (nodes_[j] + 1.0));
  }

  double t_;
  int panels_ = 0;
  bool ok_ = false;
  std::vector<double> nodes_, bary_;
  std::vector<cplx> values_;
};

// f on [-t, t], through the interpolant when that is cheaper than f itself.
class FEvaluator {
 public:
  FEvaluator(const DynamicalFreeEnergy& f, double t) : f_(f) {
    if (f.kind() != DynamicalFreeEnergy::Kind::cumulant_truncation) {
      table_.emplace(f, t);
      if (!table_->ok()) table_.reset();
    }
  }
  cplx operator()(double x) const {
    if (!table_) return f_(x);
    if (x == 0.0) return 0.0;
    return x > 0.0 ? table_->eval(x) : std::conj(table_->eval(-x));
  }

 private:
  const DynamicalFreeEnergy& f_;
  std::optional<ChebyshevTable> table_;
};

// Labels of sorted slots 1..alpha-1 (slot 0 carries label 0).
std::vector<std::vector<int>> cyclic_orderings(int alpha) {
  std::vector<int> rest(alpha - 1);
  std::iota(rest.begin(), rest.end(), 1);
  std::vector<std::vector<int>> out;
  do {
    std::vector<int> slot_of(alpha);
    slot_of[0] = 0;
    for (int s = 1; s < alpha; ++s) slot_of[rest[s - 1]] = s;
    out.push_back(slot_of);
  } while (std::next_permutation(rest.begin(), rest.end()));
  return out;
}

struct GridLevel {
  int r_panels;
  int w_nodes;
};

cplx grid_pass(const FEvaluator& f, double volume, double t, int alpha, const GridLevel& level) {
  const auto orderings = cyclic_orderings(alpha);
  const quad::Rule& wr = quad::gauss_legendre(level.w_nodes);
  std::vector<double> wx(level.w_nodes), ww(level.w_nodes);
  for (int i = 0; i < level.w_nodes; ++i) {
    wx[i] = 0.5 * (wr.nodes[i] + 1.0);
    ww[i] = 0.5 * wr.weights[i];
  }
  // simplex of unit-range gap fractions with their weights
  std::vector<std::vector<double>> fracs;
  std::vector<double> fw;
  if (alpha == 2) {
    fracs.push_back({1.0});
    fw.push_back(1.0);
  } else if (alpha == 3) {
    for (int i = 0; i < level.w_nodes; ++i) {
      fracs.push_back({wx[i], 1.0 - wx[i]});
      fw.push_back(ww[i]);
    }
  } else {
    for (int i = 0; i < level.w_nodes; ++i)
      for (int j = 0; j < level.w_nodes; ++j) {
        const double u = wx[i], v = wx[j];
        fracs.push_back({u, (1.0 - u) * v, (1.0 - u) * (1.0 - v)});
        fw.push_back(ww[i] * ww[j] * (1.0 - u));
      }
  }
  // slot positions per fraction, shared across r
  const std::size_t nf = fracs.size();
  std::vector<double> unit_pos(nf * alpha);
  for (std::size_t k = 0; k < nf; ++k) {
    double acc = 0.0;
    unit_pos[k * alpha] = 0.0;
    for (int s = 1; s < alpha; ++s) {
      acc += fracs[k][s - 1];
      unit_pos[k * alpha + s] = acc;
    }
  }
  auto slice = [&](double r) {
    cplx sum = 0.0;
    for (const auto& slot_of : orderings) {
      for (std::size_t k = 0; k < nf; ++k) {
        const double* pos = &unit_pos[k * alpha];
        cplx s = 0.0;
        for (int j = 0; j < alpha; ++j) {
          const int next = (j + 1) % alpha;
          s += f(r * (pos[slot_of[j]] - pos[slot_of[next]]));
        }
        const cplx z = -volume * s;
        if (z.real() < -745.0) continue;
        sum += fw[k] * std::exp(z);
      }
    }
    return sum * (std::pow(r, alpha - 2) * (t - r));
  };
  const cplx total = quad::composite_gauss(slice, 0.0, t, level.r_panels, 16);
  return static_cast<double>(alpha) * total / std::pow(t, alpha);
}

MomentEstimate grid_moment(const FEvaluator& f, double volume, double t, int alpha, double sigma, double rel_tol) {
  const int base_panels = std::clamp(static_cast<int>(std::ceil(2.0 * t / sigma)), 2, 4096);
  const int base_w = alpha == 3 ? 24 : 20;
  cplx prev = grid_pass(f, volume, t, alpha, {base_panels, base_w});
  double diff = 0.0;
  for (int level = 1; level <= 3; ++level) {
    const cplx cur = grid_pass(f, volume, t, alpha, {base_panels << level, base_w + 10 * level});
    diff = std::abs(cur.real() - prev.real());
    prev = cur;
    if (diff <= rel_tol * std::abs(cur.real())) return {cur.real(), diff, cur.imag(), MomentScheme::grid};
  }
  throw AccuracyError("moments_quadrature: grid refinement did not reach the target", diff / std::abs(prev.real()),
                      rel_tol);
}

MomentEstimate mc_moment(const FEvaluator& f, double volume, double t, int alpha, double e2, std::uint64_t seed,
                         std::int64_t pairs) {
  const int n = alpha - 1;
  constexpr double kappa = 1.3;  // widened proposal
  constexpr double beta = 0.1;   // defensive uniform component on [-t, t]^n
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  for (int j = 0; j < n; ++j) {
    a(j, j) = 2.0;
    if (j + 1 < n) a(j, j + 1) = a(j + 1, j) = -1.0;
  }
  const double prec_scale = volume * e2 / kappa;
  const Eigen::MatrixXd cov = a.inverse() / prec_scale;
  const Eigen::MatrixXd chol = cov.llt().matrixL();
  const Eigen::MatrixXd prec = a * prec_scale;
  const double log_gauss_norm = -0.5 * n * std::log(2.0 * kPi) - chol.diagonal().array().log().sum();
  const double box_density = std::pow(2.0 * t, -n);

  auto density = [&](const Eigen::VectorXd& p) {
    const double g = std::exp(log_gauss_norm - 0.5 * p.dot(prec * p));
    const bool in_box = (p.array().abs() <= t).all();
    return (1.0 - beta) * g + beta * (in_box ? box_density : 0.0);
  };
  auto integrand = [&](const Eigen::VectorXd& p) -> cplx {
    const double range = std::max(0.0, p.maxCoeff()) - std::min(0.0, p.minCoeff());
    if (range >= t) return 0.0;
    cplx s = f(-p(0)) + f(p(n - 1));
    for (int j = 0; j + 1 < n; ++j) s += f(p(j) - p(j + 1));
    const cplx z = -volume * s;
    if (z.real() < -745.0) return 0.0;
    return (t - range) * std::exp(z) / density(p);
  };

  Eigen::VectorXd z(n), p(n), q(n);
  double sum = 0.0, sum_sq = 0.0, sum_im = 0.0;
  const double np = static_cast<double>(pairs);
  for (std::int64_t i = 0; i < pairs; ++i) {
    const bool uniform = counter_uniform(seed, i, n + 1) < beta;
    if (uniform) {
      for (int c = 0; c < n; ++c) p(c) = t * (2.0 * counter_uniform(seed, i, c) - 1.0);
      q = p;
      q(0) = -p(0);
    } else {
      z(0) = special::normal_quantile((static_cast<double>(i) + counter_uniform(seed, i, 0)) / np);
      for (int c = 1; c < n; ++c) z(c) = special::normal_quantile(counter_uniform(seed, i, c));
      p.noalias() = chol * z;
      z(0) = -z(0);
      q.noalias() = chol * z;
    }
    const cplx h = 0.5 * (integrand(p) + integrand(q));
    sum += h.real();
    sum_sq += h.real() * h.real();
    sum_im += h.imag();
  }
  const double mean = sum / np;
  const double var = std::max(0.0, sum_sq / np - mean * mean);
  const double norm = 1.0 / std::pow(t, alpha);
  return {norm * mean, norm * std::sqrt(var / (np - 1.0)), norm * sum_im / np, MomentScheme::monte_carlo};
}

}  // namespace

MomentEstimate moments_quadrature(const DynamicalFreeEnergy& f, double L, int d, double t, int alpha,
                                  const MomentOptions& options) {
  if (alpha < 2 || alpha > 4) throw DomainError("moments_quadrature: alpha must be 2, 3 or 4");
  if (!(L > 0.0)) throw DomainError("moments_quadrature: L must be positive");
  if (d < 1) throw DomainError("moments_quadrature: d must be >= 1");
  if (!(t > 0.0) || !std::isfinite(t)) throw DomainError("moments_quadrature: t must be positive");
  if (t > f.max_time()) throw DomainError("moments_quadrature: t beyond the range of f");
  if (!(options.rel_tol > 0.0)) throw DomainError("moments_quadrature: rel_tol must be positive");
  MomentScheme scheme = options.scheme == MomentScheme::automatic ? MomentScheme::grid : options.scheme;
  if (f.trivial()) return {1.0, 0.0, 0.0, scheme};

  const double volume = std::pow(L, d);
  const double e2 = second_cumulant_from_f(f, std::min(0.02, 0.25 * t));
  const double sigma = e2 > 0.0 ? std::min(t, 1.0 / std::sqrt(volume * e2)) : t;
  const FEvaluator fe(f, t);
  if (scheme == MomentScheme::grid) return grid_moment(fe, volume, t, alpha, sigma, options.rel_tol);
  if (options.mc_pairs < 16) throw DomainError("moments_quadrature: too few Monte Carlo samples");
  if (!(e2 > 0.0)) throw DomainError("moments_quadrature: Monte Carlo proposal needs e_2 > 0");
  return mc_moment(fe, volume, t, alpha, e2, options.seed, options.mc_pairs);
}

RenyiEstimate renyi_quadrature(const DynamicalFreeEnergy& f, double L, int d, double t, int alpha,
                               const MomentOptions& options) {
  RenyiEstimate out;
  out.moment = moments_quadrature(f, L, d, t, alpha, options);
  if (!(out.moment.value > 0.0))
    throw AccuracyError("renyi_quadrature: non-positive moment estimate", out.moment.value, 0.0);
  out.value = std::log(out.moment.value) / (1.0 - alpha);
  out.error = out.moment.error / (out.moment.value * (alpha - 1.0));
  return out;
}

}  // namespace qspan
