#include "qspan/ed.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "qspan/errors.hpp"
#include "qspan/quadrature.hpp"
#include "qspan/rng.hpp"
#include "qspan/special.hpp"

namespace qspan::ed {

using cplx = std::complex<double>;

namespace {

// One Pauli string acting on basis states: b -> b ^ flip with amplitude
// factor * (-1)^{popcount(b & sign)}.
struct CompiledTerm {
  std::uint64_t flip = 0;
  std::uint64_t sign = 0;
  cplx factor;
};

std::vector<CompiledTerm> compile(const PauliHamiltonian& h) {
  static const cplx ipow[4] = {cplx(1, 0), cplx(0, 1), cplx(-1, 0), cplx(0, -1)};
  std::vector<CompiledTerm> out;
  out.reserve(h.terms().size());
  for (const PauliTerm& term : h.terms()) {
    CompiledTerm c;
    int ny = 0;
    for (const PauliOp& op : term.ops) {
      const std::uint64_t bit = std::uint64_t(1) << op.site;
      switch (op.op) {
        case Pauli::X: c.flip |= bit; break;
        case Pauli::Y:
          c.flip |= bit;
          c.sign |= bit;
          ++ny;
          break;
        case Pauli::Z: c.sign |= bit; break;
      }
    }
    c.factor = term.coeff * ipow[ny % 4];
    out.push_back(c);
  }
  return out;
}

inline double parity_sign(std::uint64_t b, std::uint64_t mask) {
  return (std::popcount(b & mask) & 1) ? -1.0 : 1.0;
}

char pauli_char(Pauli p) { return p == Pauli::X ? 'X' : p == Pauli::Y ? 'Y' : 'Z'; }

}  // namespace

// --- PauliHamiltonian ---------------------------------------------------------------

PauliHamiltonian::PauliHamiltonian(int L, Boundary boundary) : L_(L), boundary_(boundary) {
  if (L < 1 || L > kMaxSites)
    throw DomainError("PauliHamiltonian: L must lie in [1, " + std::to_string(kMaxSites) + "]");
}

int PauliHamiltonian::derive_anchor(const std::vector<PauliOp>& ops) const {
  if (ops.size() == 1) return ops[0].site;
  if (ops.size() == 2) {
    const int a = ops[0].site, b = ops[1].site;  // a < b
    if (b == a + 1) return a;
    if (boundary_ == Boundary::periodic && a == 0 && b == L_ - 1) return L_ - 1;
  }
  return -1;
}

void PauliHamiltonian::add_term(double coeff, std::vector<PauliOp> ops, int anchor) {
  if (!std::isfinite(coeff)) throw DomainError("PauliHamiltonian: coefficient must be finite");
  if (ops.empty()) throw DomainError("PauliHamiltonian: a term needs at least one operator");
  for (const PauliOp& op : ops)
    if (op.site < 0 || op.site >= L_)
      throw DomainError("PauliHamiltonian: site " + std::to_string(op.site) + " outside the chain");
  std::sort(ops.begin(), ops.end(), [](const PauliOp& a, const PauliOp& b) { return a.site < b.site; });
  for (std::size_t i = 1; i < ops.size(); ++i)
    if (ops[i].site == ops[i - 1].site)
      throw DomainError("PauliHamiltonian: two operators on site " + std::to_string(ops[i].site));
  terms_.push_back({coeff, std::move(ops), anchor});
}

void PauliHamiltonian::add(double coeff, std::vector<PauliOp> ops) {
  std::sort(ops.begin(), ops.end(), [](const PauliOp& a, const PauliOp& b) { return a.site < b.site; });
  const int anchor = ops.empty() ? -1 : derive_anchor(ops);
  add_term(coeff, std::move(ops), anchor);
}

void PauliHamiltonian::add_translates(double coeff, const std::vector<PauliOp>& pattern, bool staggered) {
  if (pattern.empty()) throw DomainError("PauliHamiltonian: empty translated pattern");
  int lowest = pattern[0].site;
  for (const PauliOp& op : pattern) {
    if (op.site < 0) throw DomainError("PauliHamiltonian: pattern offsets must be >= 0");
    lowest = std::min(lowest, op.site);
  }
  for (int l = 0; l < L_; ++l) {
    std::vector<PauliOp> ops;
    bool inside = true;
    for (const PauliOp& op : pattern) {
      int s = l + op.site;
      if (s >= L_) {
        if (boundary_ == Boundary::open) {
          inside = false;
          break;
        }
        s %= L_;
      }
      ops.push_back({s, op.op});
    }
    if (!inside) continue;
    const double c = staggered && (l % 2) ? -coeff : coeff;
    int anchor = (l + lowest) % L_;
    std::vector<PauliOp> sorted = ops;
    std::sort(sorted.begin(), sorted.end(), [](const PauliOp& a, const PauliOp& b) { return a.site < b.site; });
    if (derive_anchor(sorted) < 0) anchor = -1;
    add_term(c, std::move(ops), anchor);
  }
}

bool PauliHamiltonian::is_real() const {
  for (const PauliTerm& t : terms_) {
    const auto ny = std::count_if(t.ops.begin(), t.ops.end(), [](const PauliOp& o) { return o.op == Pauli::Y; });
    if (ny % 2) return false;
  }
  return true;
}

double PauliHamiltonian::coefficient_norm() const {
  double s = 0.0;
  for (const PauliTerm& t : terms_) s += std::abs(t.coeff);
  return s;
}

PauliHamiltonian PauliHamiltonian::density(int site) const {
  if (site < 0 || site >= L_) throw DomainError("PauliHamiltonian::density: site outside the chain");
  PauliHamiltonian out(L_, boundary_);
  for (const PauliTerm& t : terms_) {
    if (t.anchor < 0) {
      std::string s;
      for (const PauliOp& op : t.ops) s += std::string(1, pauli_char(op.op)) + "@" + std::to_string(op.site) + " ";
      throw DomainError("energy density: term " + s + "spans more than a nearest-neighbour bond");
    }
    if (t.anchor == site) out.terms_.push_back(t);
  }
  return out;
}

template <class Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> build_hamiltonian(const PauliHamiltonian& h) {
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  if constexpr (!std::is_same_v<Scalar, cplx>) {
    if (!h.is_real()) throw DomainError("build_hamiltonian: H has complex entries; use a complex scalar");
  }
  const Eigen::Index n = h.dimension();
  Mat m = Mat::Zero(n, n);
  for (const CompiledTerm& c : compile(h)) {
    for (Eigen::Index b = 0; b < n; ++b) {
      const auto ub = static_cast<std::uint64_t>(b);
      const cplx v = c.factor * parity_sign(ub, c.sign);
      if constexpr (std::is_same_v<Scalar, cplx>) {
        m(static_cast<Eigen::Index>(ub ^ c.flip), b) += v;
      } else {
        m(static_cast<Eigen::Index>(ub ^ c.flip), b) += v.real();
      }
    }
  }
  return m;
}

template Eigen::MatrixXd build_hamiltonian<double>(const PauliHamiltonian&);
template Eigen::MatrixXcd build_hamiltonian<cplx>(const PauliHamiltonian&);

void apply_hamiltonian(const PauliHamiltonian& h, const Eigen::VectorXcd& v, Eigen::VectorXcd& out) {
  const Eigen::Index n = h.dimension();
  if (v.size() != n) throw DomainError("apply_hamiltonian: vector size does not match 2^L");
  out.setZero(n);
  for (const CompiledTerm& c : compile(h))
    for (Eigen::Index b = 0; b < n; ++b) {
      const auto ub = static_cast<std::uint64_t>(b);
      out(static_cast<Eigen::Index>(ub ^ c.flip)) += c.factor * parity_sign(ub, c.sign) * v(b);
    }
}

Eigen::VectorXcd product_state(int L, std::string_view pattern) {
  if (L < 1 || L > PauliHamiltonian::kMaxSites) throw DomainError("product_state: L out of range");
  std::uint64_t index = 0;
  if (pattern == "up") {
    index = 0;
  } else if (pattern == "down") {
    index = (std::uint64_t(1) << L) - 1;
  } else {
    if (static_cast<int>(pattern.size()) != L)
      throw DomainError("product_state: pattern must be 'up', 'down' or one character per site");
    for (int s = 0; s < L; ++s) {
      const char ch = pattern[s];
      if (ch == 'd' || ch == '1') index |= std::uint64_t(1) << s;
      else if (ch != 'u' && ch != '0') throw DomainError(std::string("product_state: bad site character '") + ch + "'");
    }
  }
  Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(Eigen::Index(1) << L);
  psi(static_cast<Eigen::Index>(index)) = 1.0;
  return psi;
}

// --- ground state -------------------------------------------------------------------

namespace {

void fix_gauge(Eigen::VectorXcd& v) {
  v.normalize();
  const double top = v.cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v(i)) > 1e-10 * top) {
      v *= std::conj(v(i)) / std::abs(v(i));
      v(i) = std::abs(v(i));
      return;
    }
  }
}

struct Ritz {
  double value = 0.0;
  Eigen::VectorXcd vector;
};

// Lowest eigenpair of H restricted to the complement of `deflate`, by
// restarted Lanczos with full reorthogonalisation.
Ritz lanczos_lowest(const PauliHamiltonian& h, const std::vector<Eigen::VectorXcd>& deflate, std::uint64_t seed) {
  const Eigen::Index n = h.dimension();
  const double scale = std::max(1.0, h.coefficient_norm());
  const double tol = 1e-11 * scale;
  const Eigen::Index m = std::min<Eigen::Index>(n - static_cast<Eigen::Index>(deflate.size()), 120);
  auto project = [&](Eigen::VectorXcd& w) {
    for (const auto& d : deflate) w -= d * d.dot(w);
  };
  Eigen::VectorXcd start(n);
  for (Eigen::Index i = 0; i < n; ++i)
    start(i) = cplx(counter_uniform(seed, i, 0) - 0.5, counter_uniform(seed, i, 1) - 0.5);
  Eigen::MatrixXcd q(n, m + 1);
  Eigen::VectorXcd w(n), hx(n);
  for (int restart = 0; restart < 200; ++restart) {
    project(start);
    project(start);
    start.normalize();
    q.col(0) = start;
    std::vector<double> alpha, beta;
    Eigen::Index k = 0;
    for (; k < m; ++k) {
      apply_hamiltonian(h, q.col(k), w);
      project(w);
      const double a = q.col(k).dot(w).real();
      alpha.push_back(a);
      for (int pass = 0; pass < 2; ++pass) {
        w -= q.leftCols(k + 1) * (q.leftCols(k + 1).adjoint() * w);
        project(w);
      }
      const double b = w.norm();
      if (k + 1 == m || b < 1e-13 * scale) {
        ++k;
        break;
      }
      beta.push_back(b);
      q.col(k + 1) = w / b;
    }
    Eigen::VectorXd diag = Eigen::Map<Eigen::VectorXd>(alpha.data(), k);
    Eigen::VectorXd sub(std::max<Eigen::Index>(k - 1, 0));
    for (Eigen::Index i = 0; i + 1 < k; ++i) sub(i) = beta[i];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> tri;
    tri.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
    const double theta = tri.eigenvalues()(0);
    Eigen::VectorXcd x = q.leftCols(k) * tri.eigenvectors().col(0).cast<cplx>();
    project(x);
    x.normalize();
    apply_hamiltonian(h, x, hx);
    project(hx);
    const double res = (hx - theta * x).norm();
    if (res < tol || k < m) return {theta, x};
    start = x;
  }
  throw AccuracyError("ground_state: Lanczos did not converge", 0.0, tol);
}

}  // namespace

GroundState ground_state(const PauliHamiltonian& h) {
  GroundState gs;
  const Eigen::Index n = h.dimension();
  if (n <= 2048) {
    Eigen::VectorXd values;
    if (h.is_real()) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(build_hamiltonian<double>(h));
      values = es.eigenvalues();
      gs.vector = es.eigenvectors().col(0).cast<cplx>();
    } else {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(build_hamiltonian<cplx>(h));
      values = es.eigenvalues();
      gs.vector = es.eigenvectors().col(0);
    }
    gs.energy = values(0);
    gs.gap = n > 1 ? values(1) - values(0) : std::numeric_limits<double>::infinity();
  } else {
    const Ritz r0 = lanczos_lowest(h, {}, 0x5eed0);
    const Ritz r1 = lanczos_lowest(h, {r0.vector}, 0x5eed1);
    gs.vector = r0.vector;
    gs.energy = r0.value;
    gs.gap = r1.value - r0.value;
  }
  fix_gauge(gs.vector);
  if (gs.gap < 1e-10) {
    gs.degenerate = true;
    std::ostringstream os;
    os << "ground state degenerate within " << gs.gap << "; using the gauge-fixed vector of the lowest block";
    gs.warning = os.str();
  }
  return gs;
}

// --- spectral decomposition ---------------------------------------------------------------

SpectralDecomposition diagonalize(const PauliHamiltonian& h, const Eigen::VectorXcd& psi0, bool keep_basis) {
  const Eigen::Index n = h.dimension();
  if (psi0.size() != n) throw DomainError("diagonalize: state size does not match 2^L");
  if (std::abs(psi0.norm() - 1.0) > 1e-10) throw DomainError("diagonalize: initial state must be normalised");
  SpectralDecomposition sd;
  Eigen::MatrixXcd basis;
  if (h.is_real()) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(build_hamiltonian<double>(h));
    if (es.info() != Eigen::Success) throw AccuracyError("diagonalize: eigensolver failed", 1.0, 0.0);
    sd.energies = es.eigenvalues();
    sd.overlaps = es.eigenvectors().transpose() * psi0;
    if (keep_basis) basis = es.eigenvectors().cast<cplx>();
  } else {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(build_hamiltonian<cplx>(h));
    if (es.info() != Eigen::Success) throw AccuracyError("diagonalize: eigensolver failed", 1.0, 0.0);
    sd.energies = es.eigenvalues();
    sd.overlaps = es.eigenvectors().adjoint() * psi0;
    if (keep_basis) basis = es.eigenvectors();
  }
  sd.norm = sd.energies.cwiseAbs().maxCoeff();

  const double merge_tol = 1e-11 * std::max(1.0, sd.norm);
  std::vector<double> le, lw;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> ranges;
  for (Eigen::Index i = 0; i < n;) {
    Eigen::Index j = i + 1;
    while (j < n && sd.energies(j) - sd.energies(j - 1) <= merge_tol) ++j;
    double p = 0.0, pe = 0.0;
    for (Eigen::Index k = i; k < j; ++k) {
      const double w = std::norm(sd.overlaps(k));
      p += w;
      pe += w * sd.energies(k);
    }
    if (p >= 1e-28) {
      le.push_back(pe / p);
      lw.push_back(p);
      ranges.emplace_back(i, j);
    }
    i = j;
  }
  sd.level_energies = Eigen::Map<Eigen::VectorXd>(le.data(), static_cast<Eigen::Index>(le.size()));
  sd.level_weights = Eigen::Map<Eigen::VectorXd>(lw.data(), static_cast<Eigen::Index>(lw.size()));
  if (std::abs(sd.level_weights.sum() - 1.0) > 1e-10)
    throw AccuracyError("diagonalize: overlaps do not sum to 1", std::abs(sd.level_weights.sum() - 1.0), 1e-10);
  if (keep_basis) {
    Eigen::MatrixXcd lv(n, static_cast<Eigen::Index>(ranges.size()));
    for (std::size_t k = 0; k < ranges.size(); ++k) {
      const auto [i, j] = ranges[k];
      lv.col(static_cast<Eigen::Index>(k)) =
          basis.middleCols(i, j - i) * sd.overlaps.segment(i, j - i) / std::sqrt(lw[k]);
    }
    sd.level_vectors = std::move(lv);
    sd.basis = std::move(basis);
  }
  return sd;
}

double spectral_residual(const PauliHamiltonian& h, const SpectralDecomposition& sd, int samples) {
  if (!sd.basis) throw DomainError("spectral_residual: decomposition kept no basis");
  const Eigen::Index n = sd.energies.size();
  samples = std::max(1, std::min<int>(samples, static_cast<int>(n)));
  double worst = 0.0;
  Eigen::VectorXcd hv;
  for (int s = 0; s < samples; ++s) {
    const Eigen::Index i = samples == 1 ? 0 : (n - 1) * s / (samples - 1);
    apply_hamiltonian(h, sd.basis->col(i), hv);
    worst = std::max(worst, (hv - sd.energies(i) * sd.basis->col(i)).norm());
  }
  return worst;
}

// --- time averages --------------------------------------------------------------------

cplx uniform_kernel(double delta, double t) {
  const double x = delta * t;
  if (std::abs(x) < 1e-9) return {1.0, -0.5 * x};
  const double s = std::sin(0.5 * x);
  return {std::sin(x) / x, -2.0 * s * s / x};
}

namespace {

double sinc(double x) { return std::abs(x) < 1e-8 ? 1.0 - x * x / 6.0 : std::sin(x) / x; }

// rho over [t0, t0 + t] is D S D^dagger with S_kl = c_k c_l sinc((E_k - E_l) t / 2)
// real symmetric and D = diag(exp(-i E_k (t0 + t/2))).
Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> centred_solver(const SpectralDecomposition& sd, double t,
                                                              bool vectors) {
  const Eigen::Index n = sd.level_energies.size();
  const Eigen::VectorXd c = sd.level_weights.cwiseSqrt();
  Eigen::MatrixXd s(n, n);
  for (Eigen::Index l = 0; l < n; ++l)
    for (Eigen::Index k = l; k < n; ++k) {
      const double v = c(k) * c(l) * sinc(0.5 * (sd.level_energies(k) - sd.level_energies(l)) * t);
      s(k, l) = v;
      s(l, k) = v;
    }
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(s, vectors ? Eigen::ComputeEigenvectors
                                                                   : Eigen::EigenvaluesOnly);
}

void finish_spectrum(AveragedStateSpectrum& out, const Eigen::VectorXd& ascending) {
  const Eigen::Index n = ascending.size();
  out.eigenvalues.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) out.eigenvalues[i] = std::max(0.0, ascending(n - 1 - i));
  out.cumulative.resize(n);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) out.cumulative[i] = (acc += out.eigenvalues[i]);
}

}  // namespace

AveragedStateSpectrum averaged_state(const SpectralDecomposition& sd, double t0, double t, bool want_vectors) {
  if (!(t > 0.0) || !std::isfinite(t)) throw DomainError("averaged_state: t must be positive");
  const auto es = centred_solver(sd, t, want_vectors);
  AveragedStateSpectrum out;
  out.t0 = t0;
  out.t = t;
  finish_spectrum(out, es.eigenvalues());
  if (want_vectors) {
    const Eigen::Index n = sd.level_energies.size();
    Eigen::MatrixXcd v(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      const Eigen::VectorXd s = es.eigenvectors().col(n - 1 - j);
      for (Eigen::Index k = 0; k < n; ++k) v(k, j) = std::polar(s(k), -sd.level_energies(k) * (t0 + 0.5 * t));
    }
    out.vectors = std::move(v);
  }
  return out;
}

AveragedStateSpectrum averaged_state(const SpectralDecomposition& sd, double t0, const WeightFunction& w,
                                     bool want_vectors) {
  const Eigen::Index n = sd.level_energies.size();
  const double spread = sd.level_energies.maxCoeff() - sd.level_energies.minCoeff();
  const auto breaks = w.breakpoints();
  std::vector<int> panels;
  int max_panels = 1;
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i)
    max_panels = std::max(max_panels, 1 + static_cast<int>(std::ceil(spread * (breaks[i + 1] - breaks[i]) / 2.0)));
  const quad::NodeSet nodes = quad::composite_nodes(breaks, max_panels, 16);
  const Eigen::Index q = static_cast<Eigen::Index>(nodes.x.size());
  const Eigen::VectorXd c = sd.level_weights.cwiseSqrt();
  Eigen::MatrixXcd b(n, q);
  for (Eigen::Index j = 0; j < q; ++j) {
    const double tau = nodes.x[j];
    const double weight = nodes.w[j] * w(tau);
    if (weight < 0.0) throw DomainError("averaged_state: negative weight");
    const double root = std::sqrt(weight);
    for (Eigen::Index k = 0; k < n; ++k) b(k, j) = std::polar(root * c(k), -sd.level_energies(k) * (t0 + tau));
  }
  Eigen::MatrixXcd m = b * b.adjoint();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(m, want_vectors ? Eigen::ComputeEigenvectors
                                                                     : Eigen::EigenvaluesOnly);
  AveragedStateSpectrum out;
  out.t0 = t0;
  out.t = w.width();
  finish_spectrum(out, es.eigenvalues());
  if (want_vectors) out.vectors = es.eigenvectors().rowwise().reverse();
  return out;
}

Eigen::MatrixXcd averaged_state_level_matrix(const SpectralDecomposition& sd, double t0, double t) {
  const Eigen::Index n = sd.level_energies.size();
  const Eigen::VectorXd c = sd.level_weights.cwiseSqrt();
  Eigen::MatrixXcd m(n, n);
  for (Eigen::Index k = 0; k < n; ++k)
    for (Eigen::Index l = 0; l < n; ++l) {
      const double d = sd.level_energies(k) - sd.level_energies(l);
      m(k, l) = c(k) * c(l) * std::polar(1.0, -d * t0) * uniform_kernel(d, t);
    }
  return m;
}

Eigen::MatrixXcd averaged_state_matrix(const SpectralDecomposition& sd, double t0, double t) {
  if (!sd.level_vectors) throw DomainError("averaged_state_matrix: decomposition kept no basis");
  const Eigen::MatrixXcd& u = *sd.level_vectors;
  return u * averaged_state_level_matrix(sd, t0, t) * u.adjoint();
}

// --- ranks and projections ---------------------------------------------------------------

RankResult effective_rank(std::span<const double> descending, double eps) {
  if (!(eps >= 0.0 && eps < 1.0)) throw DomainError("effective_rank: eps must lie in [0, 1)");
  const std::size_t n = descending.size();
  if (n == 0) throw DomainError("effective_rank: empty spectrum");
  std::vector<double> tail(n + 1, 0.0);
  for (std::size_t i = n; i-- > 0;) tail[i] = tail[i + 1] + descending[i];
  const double slack = 1e-12;
  std::size_t d = n;
  for (std::size_t k = 1; k <= n; ++k)
    if (tail[k] <= eps + slack) {
      d = k;
      break;
    }
  return {static_cast<int>(d), tail[d], descending[d - 1]};
}

RankResult effective_rank(const AveragedStateSpectrum& spectrum, double eps) {
  return effective_rank(std::span<const double>(spectrum.eigenvalues), eps);
}

Eigen::MatrixXcd retained_projector(const AveragedStateSpectrum& spectrum, int dimension) {
  if (!spectrum.vectors) throw DomainError("retained_projector: spectrum has no eigenvectors");
  if (dimension < 0 || dimension > spectrum.vectors->cols()) throw DomainError("retained_projector: bad rank");
  const auto v = spectrum.vectors->leftCols(dimension);
  return v * v.adjoint();
}

std::vector<RankPoint> rank_curve(const SpectralDecomposition& sd, int L, const std::function<double(double)>& eps_of_t,
                                  std::span<const double> times) {
  const double e2 = energy_cumulants(sd, L, 2)[1];
  const double sqrt_l = std::sqrt(static_cast<double>(L));
  std::vector<RankPoint> out;
  out.reserve(times.size());
  for (double t : times) {
    const double eps = eps_of_t(t);
    if (!(eps > 0.0 && eps < 1.0)) throw DomainError("rank_curve: eps schedule must stay inside (0, 1)");
    const RankResult r = effective_rank(averaged_state(sd, 0.0, t), eps);
    RankPoint p;
    p.t = t;
    p.eps = eps;
    p.dimension = r.dimension;
    p.discarded = r.discarded;
    p.per_sqrt_l = r.dimension / sqrt_l;
    p.prediction_per_sqrt_l = std::sqrt(2.0 * e2) / std::numbers::pi * special::erfc_inv(eps) * t;
    out.push_back(p);
  }
  return out;
}

ProjectionProfile projection_error(const SpectralDecomposition& sd, double T, double eps_T,
                                   std::span<const double> times) {
  if (!(T > 0.0)) throw DomainError("projection_error: T must be positive");
  const auto es = centred_solver(sd, T, true);
  AveragedStateSpectrum spec;
  finish_spectrum(spec, es.eigenvalues());
  const RankResult r = effective_rank(spec, eps_T);
  const Eigen::Index n = sd.level_energies.size();
  const Eigen::Index keep = std::min<Eigen::Index>(r.dimension + 1, n);
  // leading eigenvectors, descending
  Eigen::MatrixXd s(n, keep);
  for (Eigen::Index j = 0; j < keep; ++j) s.col(j) = es.eigenvectors().col(n - 1 - j);
  const Eigen::VectorXd c = sd.level_weights.cwiseSqrt();

  ProjectionProfile prof;
  prof.T = T;
  prof.eps_T = eps_T;
  prof.dimension = r.dimension;
  Eigen::VectorXcd a(n);
  for (double t : times) {
    if (t < 0.0 || t > T * (1.0 + 1e-12)) throw DomainError("projection_error: t must lie in [0, T]");
    for (Eigen::Index k = 0; k < n; ++k) a(k) = std::polar(c(k), -sd.level_energies(k) * (t - 0.5 * T));
    const Eigen::VectorXcd o = s.transpose().cast<cplx>() * a;
    std::vector<double> captured(keep + 1, 0.0);
    for (Eigen::Index j = 0; j < keep; ++j) captured[j + 1] = captured[j] + std::norm(o(j));
    auto err = [&](Eigen::Index d) { return std::clamp(1.0 - captured[std::clamp<Eigen::Index>(d, 0, keep)], 0.0, 1.0); };
    prof.points.push_back({t, err(r.dimension), err(r.dimension - 1), err(r.dimension + 1)});
  }
  return prof;
}

double projection_error(const SpectralDecomposition& sd, double T, double eps_T, double t) {
  const double ts[1] = {t};
  return projection_error(sd, T, eps_T, std::span<const double>(ts)).points[0].error;
}

// --- cumulants -----------------------------------------------------------------------

namespace {

void check_order(int n_max, double norm) {
  if (n_max < 1 || n_max > 8) throw DomainError("energy cumulants: n_max must lie in [1, 8]");
  if (std::pow(std::max(1.0, 2.0 * norm), n_max) > 1e300)
    throw DomainError("energy cumulants: moments would overflow at this order");
}

// kappa_n from moments m_0 = 1, m_1, ... of any distribution.
std::vector<double> moments_to_cumulants(const std::vector<double>& m) {
  const int n_max = static_cast<int>(m.size()) - 1;
  std::vector<double> k(n_max + 1, 0.0);
  for (int n = 1; n <= n_max; ++n) {
    double s = m[n];
    double binom = 1.0;  // C(n-1, j-1)
    for (int j = 1; j < n; ++j) {
      s -= binom * k[j] * m[n - j];
      binom = binom * (n - j) / j;
    }
    k[n] = s;
  }
  return k;
}

double binomial(int n, int k) {
  double b = 1.0;
  for (int i = 1; i <= k; ++i) b = b * (n - k + i) / i;
  return b;
}

Eigen::VectorXcd shifted_apply(const PauliHamiltonian& h, double shift, const Eigen::VectorXcd& v) {
  Eigen::VectorXcd out;
  apply_hamiltonian(h, v, out);
  out -= shift * v;
  return out;
}

void check_state(const PauliHamiltonian& h, const Eigen::VectorXcd& psi0) {
  if (psi0.size() != h.dimension()) throw DomainError("cumulants: state size does not match 2^L");
  if (std::abs(psi0.norm() - 1.0) > 1e-10) throw DomainError("cumulants: initial state must be normalised");
}

}  // namespace

std::vector<double> energy_cumulants(const SpectralDecomposition& sd, int L, int n_max, int d) {
  check_order(n_max, sd.norm);
  if (L < 1 || d < 1) throw DomainError("energy_cumulants: L and d must be positive");
  const Eigen::VectorXd& e = sd.level_energies;
  const Eigen::VectorXd& p = sd.level_weights;
  const double mean = p.dot(e) / p.sum();
  std::vector<double> m(n_max + 1, 0.0);
  m[0] = 1.0;
  for (Eigen::Index k = 0; k < e.size(); ++k) {
    const double x = e(k) - mean;
    double xp = 1.0;
    for (int j = 1; j <= n_max; ++j) m[j] += p(k) * (xp *= x);
  }
  m[1] = 0.0;
  std::vector<double> kappa = moments_to_cumulants(m);
  kappa[1] = mean;
  const double volume = std::pow(static_cast<double>(L), d);
  std::vector<double> out(kappa.begin() + 1, kappa.end());
  for (double& x : out) x /= volume;
  return out;
}

HnPolynomial build_Hn(const PauliHamiltonian& h, const Eigen::VectorXcd& psi0, int n) {
  check_state(h, psi0);
  if (n < 1 || n > 8) throw DomainError("build_Hn: order must lie in [1, 8]");
  Eigen::VectorXcd hv;
  apply_hamiltonian(h, psi0, hv);
  const double shift = psi0.dot(hv).real();
  // moments of the shifted operator
  std::vector<double> mom(n + 1, 0.0);
  mom[0] = 1.0;
  Eigen::VectorXcd v = psi0;
  for (int j = 1; j <= n; ++j) {
    v = shifted_apply(h, shift, v);
    mom[j] = psi0.dot(v).real();
  }
  std::vector<std::vector<double>> p(n + 1);
  for (int k = 1; k <= n; ++k) {
    p[k].assign(k + 1, 0.0);
    p[k][k] = 1.0;
    for (int j = 1; j < k; ++j) {
      const double c = binomial(k, j) * mom[k - j];
      for (int i = 0; i <= j; ++i) p[k][i] -= c * p[j][i];
    }
  }
  return {n, shift, p[n]};
}

Eigen::VectorXcd apply_Hn(const PauliHamiltonian& h, const HnPolynomial& p, const Eigen::VectorXcd& v) {
  Eigen::VectorXcd acc = p.coeffs.back() * v;
  for (int j = static_cast<int>(p.coeffs.size()) - 2; j >= 0; --j) acc = shifted_apply(h, p.shift, acc) + p.coeffs[j] * v;
  return acc;
}

std::vector<double> energy_cumulants(const PauliHamiltonian& h, const Eigen::VectorXcd& psi0, int n_max) {
  check_state(h, psi0);
  check_order(n_max, h.coefficient_norm());
  Eigen::VectorXcd hv;
  apply_hamiltonian(h, psi0, hv);
  const double mean = psi0.dot(hv).real();
  const Eigen::VectorXcd xv = hv - mean * psi0;
  std::vector<double> out{mean};
  for (int n = 2; n <= n_max; ++n) {
    const Eigen::VectorXcd u = apply_Hn(h, build_Hn(h, psi0, n - 1), psi0);
    out.push_back(u.dot(xv).real());
  }
  for (double& x : out) x /= h.sites();
  return out;
}

double cumulant_density(const PauliHamiltonian& h, const Eigen::VectorXcd& psi0, int site, int n) {
  check_state(h, psi0);
  if (n < 1 || n > 6) throw DomainError("cumulant_density: order must lie in [1, 6]");
  Eigen::VectorXcd hl;
  apply_hamiltonian(h.density(site), psi0, hl);
  const cplx mean_h = psi0.dot(hl);
  if (n == 1) return mean_h.real();
  const Eigen::VectorXcd u = apply_Hn(h, build_Hn(h, psi0, n - 1), psi0);
  return (u.dot(hl) - psi0.dot(u) * mean_h).real();
}

std::vector<double> cumulant_densities(const PauliHamiltonian& h, const Eigen::VectorXcd& psi0, int n) {
  std::vector<double> out;
  for (int l = 0; l < h.sites(); ++l) out.push_back(cumulant_density(h, psi0, l, n));
  return out;
}

// --- return amplitude ---------------------------------------------------------------

cplx loschmidt_amplitude(const SpectralDecomposition& sd, double t) {
  cplx acc = 0.0;
  for (Eigen::Index k = 0; k < sd.level_energies.size(); ++k)
    acc += sd.level_weights(k) * std::polar(1.0, sd.level_energies(k) * t);
  return acc;
}

std::optional<double> first_time_below(const SpectralDecomposition& sd, double threshold, double t_max, double dt) {
  if (!(dt > 0.0) || !(t_max > 0.0)) throw DomainError("first_time_below: t_max and dt must be positive");
  double prev = 0.0;
  for (double t = dt; t <= t_max + 0.5 * dt; t += dt) {
    if (std::abs(loschmidt_amplitude(sd, t)) < threshold) {
      double lo = prev, hi = t;
      for (int it = 0; it < 80; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (std::abs(loschmidt_amplitude(sd, mid)) < threshold) hi = mid; else lo = mid;
      }
      return hi;
    }
    prev = t;
  }
  return std::nullopt;
}

// --- text format ---------------------------------------------------------------------

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_number(const std::string& tok, const std::string& source, int line) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(tok, &used);
  } catch (const std::exception&) {
    throw ParseError(source, line, "expected a number, got '" + tok + "'");
  }
  if (used != tok.size() || !std::isfinite(v)) throw ParseError(source, line, "expected a number, got '" + tok + "'");
  return v;
}

PauliOp parse_op(const std::string& tok, bool translated, const std::string& source, int line) {
  const auto at = tok.find('@');
  if (at != 1) throw ParseError(source, line, "expected OP@SITE, got '" + tok + "'");
  PauliOp op{};
  switch (tok[0]) {
    case 'X': case 'x': op.op = Pauli::X; break;
    case 'Y': case 'y': op.op = Pauli::Y; break;
    case 'Z': case 'z': op.op = Pauli::Z; break;
    default: throw ParseError(source, line, "unknown Pauli operator '" + tok.substr(0, 1) + "'");
  }
  const std::string site = tok.substr(2);
  if (translated) {
    if (site.empty() || site[0] != 'i') throw ParseError(source, line, "sites on a 'sum' line are written i or i+k");
    if (site.size() == 1) {
      op.site = 0;
    } else {
      if (site[1] != '+') throw ParseError(source, line, "sites on a 'sum' line are written i or i+k");
      const double k = parse_number(site.substr(2), source, line);
      if (k < 0 || k != std::floor(k)) throw ParseError(source, line, "site offset must be a non-negative integer");
      op.site = static_cast<int>(k);
    }
  } else {
    const double k = parse_number(site, source, line);
    if (k < 0 || k != std::floor(k)) throw ParseError(source, line, "site must be a non-negative integer");
    op.site = static_cast<int>(k);
  }
  return op;
}

}  // namespace

HamiltonianModel parse_hamiltonian(std::istream& in, const std::string& source) {
  HamiltonianModel model;
  model.source = source;
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq != std::string::npos) {
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (key == "L") {
        const double v = parse_number(value, source, line_no);
        if (v != std::floor(v) || v < 1 || v > PauliHamiltonian::kMaxSites)
          throw ParseError(source, line_no, "L must be an integer in [1, 14]");
        model.L = static_cast<int>(v);
      } else if (key == "boundary") {
        if (value == "periodic") model.boundary = Boundary::periodic;
        else if (value == "open") model.boundary = Boundary::open;
        else throw ParseError(source, line_no, "boundary must be 'periodic' or 'open'");
      } else {
        throw ParseError(source, line_no, "unknown header key '" + key + "'");
      }
      continue;
    }
    std::istringstream ls(line);
    std::vector<std::string> tok;
    for (std::string t; ls >> t;) tok.push_back(t);
    HamiltonianModel::Line entry;
    entry.source_line = line_no;
    std::size_t pos = 0;
    if (tok[0] == "sum") {
      entry.translated = true;
      ++pos;
    }
    if (pos >= tok.size()) throw ParseError(source, line_no, "missing coefficient");
    entry.coeff = parse_number(tok[pos++], source, line_no);
    if (entry.translated && pos < tok.size() && tok[pos] == "stagger") {
      entry.staggered = true;
      ++pos;
    }
    if (pos >= tok.size()) throw ParseError(source, line_no, "a term needs at least one OP@SITE");
    for (; pos < tok.size(); ++pos) entry.ops.push_back(parse_op(tok[pos], entry.translated, source, line_no));
    model.lines.push_back(std::move(entry));
  }
  if (model.lines.empty()) throw ParseError(source, line_no, "no Hamiltonian terms");
  return model;
}

HamiltonianModel load_hamiltonian(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path, 0, "cannot open file");
  return parse_hamiltonian(in, path);
}

PauliHamiltonian HamiltonianModel::instantiate(int L) const {
  PauliHamiltonian h(L, boundary);
  for (const Line& line : lines) {
    try {
      if (line.translated) h.add_translates(line.coeff, line.ops, line.staggered);
      else h.add(line.coeff, line.ops);
    } catch (const DomainError& e) {
      throw ParseError(source, line.source_line, e.what());
    }
  }
  return h;
}

PauliHamiltonian HamiltonianModel::instantiate() const {
  if (!L) throw ParseError(source, 0, "file does not set L");
  return instantiate(*L);
}

}  // namespace qspan::ed
