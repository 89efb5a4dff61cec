#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "qspan/ed.hpp"
#include "qspan/errors.hpp"

using namespace qspan;
using namespace qspan::ed;
using cd = std::complex<double>;
using Eigen::MatrixXcd;
using Eigen::VectorXcd;

namespace {

MatrixXcd pauli(Pauli p) {
  MatrixXcd m(2, 2);
  switch (p) {
    case Pauli::X: m << 0, 1, 1, 0; break;
    case Pauli::Y: m << 0, cd(0, -1), cd(0, 1), 0; break;
    case Pauli::Z: m << 1, 0, 0, -1; break;
  }
  return m;
}

MatrixXcd kron(const MatrixXcd& a, const MatrixXcd& b) {
  MatrixXcd out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

// Site l is bit l, so site L-1 is the leftmost Kronecker factor.
MatrixXcd kron_oracle(const PauliHamiltonian& h) {
  const int L = h.sites();
  MatrixXcd out = MatrixXcd::Zero(h.dimension(), h.dimension());
  for (const PauliTerm& t : h.terms()) {
    MatrixXcd m = MatrixXcd::Identity(1, 1);
    for (int s = L - 1; s >= 0; --s) {
      MatrixXcd f = MatrixXcd::Identity(2, 2);
      for (const PauliOp& op : t.ops)
        if (op.site == s) f = pauli(op.op);
      m = kron(m, f);
    }
    out += t.coeff * m;
  }
  return out;
}

PauliHamiltonian random_hamiltonian(int L, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<int> op(0, 2);
  PauliHamiltonian h(L, Boundary::periodic);
  for (int l = 0; l < L; ++l) {
    h.add(scale * u(rng), {{l, static_cast<Pauli>(op(rng))}});
    if (L > 1 && (l + 1 < L || L > 2))
      h.add(scale * u(rng), {{l, static_cast<Pauli>(op(rng))}, {(l + 1) % L, static_cast<Pauli>(op(rng))}});
  }
  return h;
}

VectorXcd random_state(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  VectorXcd v(n);
  for (auto& x : v) x = cd(g(rng), g(rng));
  return v.normalized();
}

// exp(-i H t) psi by many small RK4 steps; psi may hold several columns.
MatrixXcd evolve_rk4(const MatrixXcd& h, MatrixXcd psi, double t, int steps) {
  const double dt = t / steps;
  const cd mi(0, -1);
  for (int s = 0; s < steps; ++s) {
    const MatrixXcd k1 = mi * (h * psi);
    const MatrixXcd k2 = mi * (h * (psi + 0.5 * dt * k1));
    const MatrixXcd k3 = mi * (h * (psi + 0.5 * dt * k2));
    const MatrixXcd k4 = mi * (h * (psi + dt * k3));
    psi += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return psi;
}

const char* kStaggered = R"(
boundary = periodic
sum 1.0  Y@i Y@i+1
sum 0.5  X@i X@i+1
sum 1.5  Z@i Z@i+1
sum 0.25 X@i
sum 0.3 stagger Z@i
)";

PauliHamiltonian parse(const std::string& text, int L) {
  std::istringstream in(text);
  return parse_hamiltonian(in, "test").instantiate(L);
}

}  // namespace

TEST_CASE("matrix build matches the Kronecker-product oracle") {
  std::mt19937_64 rng(1);
  for (int L = 1; L <= 4; ++L) {
    const PauliHamiltonian h = random_hamiltonian(L, rng);
    const MatrixXcd ref = kron_oracle(h);
    CHECK((build_hamiltonian<cd>(h) - ref).norm() < 1e-13);
    if (h.is_real()) CHECK((build_hamiltonian<double>(h).cast<cd>() - ref).norm() < 1e-13);
    const VectorXcd v = random_state(h.dimension(), rng);
    VectorXcd out;
    apply_hamiltonian(h, v, out);
    CHECK((out - ref * v).norm() < 1e-13);
  }
  PauliHamiltonian y(2);
  y.add(1.0, {{0, Pauli::Y}});
  CHECK_FALSE(y.is_real());
  CHECK_THROWS_AS(build_hamiltonian<double>(y), DomainError);
}

TEST_CASE("Hamiltonian construction rules") {
  PauliHamiltonian h(4, Boundary::open);
  h.add_translates(1.0, {{0, Pauli::Z}, {1, Pauli::Z}});
  CHECK(h.terms().size() == 3);
  PauliHamiltonian p(4, Boundary::periodic);
  p.add_translates(1.0, {{0, Pauli::Z}, {1, Pauli::Z}});
  CHECK(p.terms().size() == 4);
  CHECK(p.terms().back().anchor == 3);
  PauliHamiltonian s(4);
  s.add_translates(0.3, {{0, Pauli::Z}}, true);
  CHECK(s.terms()[0].coeff == 0.3);
  CHECK(s.terms()[1].coeff == -0.3);
  PauliHamiltonian two(2);
  CHECK_THROWS_AS(two.add_translates(1.0, {{0, Pauli::X}, {2, Pauli::X}}), DomainError);
  CHECK_THROWS_AS(PauliHamiltonian(15), DomainError);
  CHECK_THROWS_AS(h.add(1.0, {{4, Pauli::X}}), DomainError);
  CHECK_THROWS_AS(h.add(1.0, {{1, Pauli::X}, {1, Pauli::Z}}), DomainError);
  PauliHamiltonian long_range(5);
  long_range.add(1.0, {{0, Pauli::X}, {2, Pauli::X}});
  CHECK_THROWS_AS(long_range.density(0), DomainError);
}

TEST_CASE("parser") {
  std::istringstream ok(R"(# comment
L = 3
boundary = open
0.5 X@0 z@2   # trailing comment
sum -1 stagger Y@i Y@i+1
)");
  const HamiltonianModel m = parse_hamiltonian(ok, "ok.ham");
  CHECK(m.L == 3);
  CHECK(m.boundary == Boundary::open);
  REQUIRE(m.lines.size() == 2);
  CHECK(m.lines[1].translated);
  CHECK(m.lines[1].staggered);
  const PauliHamiltonian h = m.instantiate();
  CHECK(h.terms().size() == 3);
  CHECK(h.terms()[2].coeff == 1.0);

  auto error_line = [](const std::string& text) {
    std::istringstream in(text);
    try {
      parse_hamiltonian(in, "bad.ham").instantiate(4);
    } catch (const ParseError& e) {
      return e.line();
    }
    return -1;
  };
  CHECK(error_line("1.0 X@0\nfoo X@1\n") == 2);
  CHECK(error_line("1.0 W@0\n") == 1);
  CHECK(error_line("sum 1.0 X@0\n") == 1);
  CHECK(error_line("\n\n1.0 X@i\n") == 3);
  CHECK(error_line("boundary = twisted\n") == 1);
  CHECK(error_line("spin = 1\n") == 1);
  CHECK(error_line("1.0 X@0 X@0\n") == 1);
  CHECK(error_line("1.0 X@9\n") == 1);
  CHECK(error_line("# nothing\n") >= 0);
  CHECK_THROWS_AS(load_hamiltonian("/nonexistent.ham"), ParseError);
}

TEST_CASE("product states") {
  CHECK(product_state(3, "up")(0) == 1.0);
  CHECK(product_state(3, "down")(7) == 1.0);
  CHECK(product_state(3, "udu")(2) == 1.0);
  CHECK_THROWS_AS(product_state(3, "ud"), DomainError);
}

TEST_CASE("ground state matches power iteration") {
  const PauliHamiltonian h0 = parse("sum -1 X@i X@i+1\nsum -2 Y@i\n", 6);
  const GroundState gs = ground_state(h0);
  const MatrixXcd m = kron_oracle(h0);
  const double shift = h0.coefficient_norm();
  VectorXcd v = VectorXcd::Ones(h0.dimension()).normalized();
  double e = 0.0;
  for (int it = 0; it < 20000; ++it) {
    v = (shift * v - m * v).normalized();
    const double next = v.dot(m * v).real();
    if (std::abs(next - e) < 1e-15 && it > 100) break;
    e = next;
  }
  CHECK(gs.energy == doctest::Approx(e).epsilon(1e-10));
  CHECK(std::abs(std::abs(gs.vector.dot(v)) - 1.0) < 1e-9);
  CHECK_FALSE(gs.degenerate);
  // gauge: first significant amplitude is real positive
  for (Eigen::Index i = 0; i < gs.vector.size(); ++i)
    if (std::abs(gs.vector(i)) > 1e-8) {
      CHECK(gs.vector(i).imag() == 0.0);
      CHECK(gs.vector(i).real() > 0.0);
      break;
    }
}

TEST_CASE("Lanczos ground state at L = 12 matches the free-fermion energy") {
  // -sum (XX + h Y) on a periodic chain: E0 = -sum_{k = pi(2n+1)/L} sqrt(1 + h^2 - 2 h cos k)
  const int L = 12;
  const double hf = 2.0;
  const PauliHamiltonian h0 = parse("sum -1 X@i X@i+1\nsum -2 Y@i\n", L);
  const GroundState gs = ground_state(h0);
  double exact = 0.0;
  for (int n = 0; n < L; ++n) {
    const double k = std::numbers::pi * (2 * n + 1) / L;
    exact -= std::sqrt(1.0 + hf * hf - 2.0 * hf * std::cos(k));
  }
  CHECK(gs.energy == doctest::Approx(exact).epsilon(1e-10));
  VectorXcd hv;
  apply_hamiltonian(h0, gs.vector, hv);
  CHECK((hv - gs.energy * gs.vector).norm() < 1e-8);
  CHECK(gs.gap > 1.0);
}

TEST_CASE("degenerate ground states are reported") {
  PauliHamiltonian h(4);
  h.add_translates(-1.0, {{0, Pauli::Z}, {1, Pauli::Z}});
  const GroundState gs = ground_state(h);
  CHECK(gs.degenerate);
  CHECK_FALSE(gs.warning.empty());
}

TEST_CASE("two-site toy: hand-computed spectrum") {
  // Z0 Z1 + 0.5 X0 + 0.3 X1 commutes with X0 X1; in the sector X0 X1 = s the
  // energies are +- sqrt(1 + (0.5 + 0.3 s)^2).
  const PauliHamiltonian h = parse("L = 2\nboundary = open\n1 Z@0 Z@1\n0.5 X@0\n0.3 X@1\n", 2);
  const SpectralDecomposition sd = diagonalize(h, product_state(2, "up"), true);
  const double a = std::sqrt(1.0 + 0.64), b = std::sqrt(1.0 + 0.04);
  CHECK(sd.energies(0) == doctest::Approx(-a));
  CHECK(sd.energies(1) == doctest::Approx(-b));
  CHECK(sd.energies(2) == doctest::Approx(b));
  CHECK(sd.energies(3) == doctest::Approx(a));
  CHECK(sd.level_weights.sum() == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(spectral_residual(h, sd) < 1e-12);
  // <up up| H^2 |up up> = 1 + 0.25 + 0.09 and <H> = 1
  const auto e = energy_cumulants(sd, 2, 2);
  CHECK(e[0] == doctest::Approx(0.5));
  CHECK(e[1] == doctest::Approx(0.34 / 2));
}

TEST_CASE("return amplitude matches direct time evolution") {
  std::mt19937_64 rng(5);
  const PauliHamiltonian h = random_hamiltonian(4, rng);
  const VectorXcd psi = random_state(h.dimension(), rng);
  const SpectralDecomposition sd = diagonalize(h, psi);
  const MatrixXcd m = build_hamiltonian<cd>(h);
  for (double t : {0.3, 1.7}) {
    const VectorXcd pt = evolve_rk4(m, psi, t, 4000).col(0);
    CHECK(std::abs(pt.dot(psi) - loschmidt_amplitude(sd, t)) < 1e-9);
  }
  const auto below = first_time_below(sd, 0.5, 20.0, 0.01);
  if (below) CHECK(std::abs(loschmidt_amplitude(sd, *below)) == doctest::Approx(0.5).epsilon(1e-8));
}

TEST_CASE("merged levels: degenerate eigenvalues collapse into one level") {
  PauliHamiltonian h(4);
  h.add_translates(1.0, {{0, Pauli::Z}, {1, Pauli::Z}});
  h.add_translates(0.4, {{0, Pauli::X}});
  std::mt19937_64 rng(2);
  const SpectralDecomposition sd = diagonalize(h, random_state(16, rng), true);
  CHECK(sd.level_energies.size() < sd.energies.size());
  for (Eigen::Index k = 1; k < sd.level_energies.size(); ++k) CHECK(sd.level_energies(k) - sd.level_energies(k - 1) > 1e-9);
  const MatrixXcd& u = *sd.level_vectors;
  CHECK((u.adjoint() * u - MatrixXcd::Identity(u.cols(), u.cols())).norm() < 1e-10);
}

TEST_CASE("averaged state equals the brute-force Riemann average") {
  std::mt19937_64 rng(11);
  for (int L : {2, 3}) {
    const PauliHamiltonian h = random_hamiltonian(L, rng, 0.4);
    const VectorXcd psi = random_state(h.dimension(), rng);
    const SpectralDecomposition sd = diagonalize(h, psi, true);
    const MatrixXcd m = build_hamiltonian<cd>(h);
    for (double t : {0.5, 2.0}) {
      const int slices = 10000;
      const MatrixXcd step = evolve_rk4(m, MatrixXcd::Identity(m.rows(), m.cols()), t / slices, 4);
      VectorXcd v = evolve_rk4(m, psi, 0.5 * t / slices, 8).col(0);
      MatrixXcd avg = MatrixXcd::Zero(m.rows(), m.cols());
      for (int s = 0; s < slices; ++s) {
        avg += v * v.adjoint();
        v = step * v;
      }
      avg /= slices;
      const MatrixXcd rho = averaged_state_matrix(sd, 0.0, t);
      CHECK(Eigen::SelfAdjointEigenSolver<MatrixXcd>(rho - avg).eigenvalues().cwiseAbs().maxCoeff() < 1e-6);
    }
  }
}

TEST_CASE("averaged-state spectrum properties") {
  std::mt19937_64 rng(4);
  const PauliHamiltonian h = random_hamiltonian(4, rng);
  const SpectralDecomposition sd = diagonalize(h, random_state(16, rng));
  const auto base = averaged_state(sd, 0.0, 3.0);
  CHECK(base.cumulative.back() == doctest::Approx(1.0).epsilon(1e-12));
  for (double t0 : {0.7, 2.1}) {
    const auto shifted = averaged_state(sd, t0, 3.0);
    for (std::size_t i = 0; i < base.eigenvalues.size(); ++i)
      CHECK(std::abs(shifted.eigenvalues[i] - base.eigenvalues[i]) < 1e-10);
  }
  double previous = 1.0 + 1e-12;
  for (double t = 0.1; t < 8.0; t += 0.3) {
    const auto s = averaged_state(sd, 0.0, t);
    double purity = 0.0;
    for (double l : s.eigenvalues) purity += l * l;
    CHECK(purity <= previous + 1e-12);
    previous = purity;
  }
  // the uniform weight through the quadrature path
  const auto weighted = averaged_state(sd, 0.4, WeightFunction::uniform(3.0));
  for (std::size_t i = 0; i < base.eigenvalues.size(); ++i)
    CHECK(std::abs(weighted.eigenvalues[i] - base.eigenvalues[i]) < 1e-10);
  // eigenvectors reproduce the level-basis matrix
  const auto full = averaged_state(sd, 0.4, 3.0, true);
  const MatrixXcd& v = *full.vectors;
  Eigen::VectorXd lam = Eigen::Map<const Eigen::VectorXd>(full.eigenvalues.data(), full.eigenvalues.size());
  CHECK((v * lam.asDiagonal() * v.adjoint() - averaged_state_level_matrix(sd, 0.4, 3.0)).norm() < 1e-12);
}

TEST_CASE("kernel limit and effective rank") {
  CHECK(std::abs(uniform_kernel(0.0, 2.0) - 1.0) < 1e-15);
  CHECK(std::abs(uniform_kernel(1e-12, 1.0) - cd(1.0, -5e-13)) < 1e-15);
  const double t = 1.3, d = 0.7;
  CHECK(std::abs(uniform_kernel(d, t) - (1.0 - std::exp(cd(0, -d * t))) / cd(0, d * t)) < 1e-14);

  const std::vector<double> spec{0.5, 0.3, 0.15, 0.05};
  CHECK(effective_rank(spec, 0.0).dimension == 4);
  CHECK(effective_rank(spec, 0.05).dimension == 3);
  CHECK(effective_rank(spec, 0.2).dimension == 2);
  CHECK(effective_rank(spec, 0.19).dimension == 3);
  CHECK(effective_rank(spec, 0.2).discarded == doctest::Approx(0.2));
  CHECK_THROWS_AS(effective_rank(spec, 1.0), DomainError);
}

TEST_CASE("projector and projection error") {
  std::mt19937_64 rng(8);
  const PauliHamiltonian h = random_hamiltonian(3, rng);
  const SpectralDecomposition sd = diagonalize(h, random_state(8, rng));
  const auto s = averaged_state(sd, 0.0, 2.0, true);
  const RankResult r = effective_rank(s, 0.01);
  const MatrixXcd p = retained_projector(s, r.dimension);
  CHECK((p * p - p).norm() < 1e-10);
  CHECK(p.trace().real() == doctest::Approx(r.dimension));
  // eps = 0 keeps every level: no error anywhere
  const std::vector<double> ts{0.0, 0.5, 1.0};
  for (const auto& pt : projection_error(sd, 1e4, 0.0, ts).points) CHECK(pt.error < 1e-10);
  // projection error equals 1 - <psi_t|P|psi_t> evaluated directly
  const double T = 2.0;
  const auto prof = projection_error(sd, T, 0.01, std::vector<double>{0.0, 0.8});
  CHECK(prof.dimension == r.dimension);
  for (const auto& pt : prof.points) {
    VectorXcd a(sd.level_energies.size());
    for (Eigen::Index k = 0; k < a.size(); ++k)
      a(k) = std::sqrt(sd.level_weights(k)) * std::exp(cd(0, -sd.level_energies(k) * pt.t));
    CHECK(pt.error == doctest::Approx(1.0 - a.dot(p * a).real()).epsilon(1e-10).scale(1.0));
    CHECK(pt.error_fewer >= pt.error);
    CHECK(pt.error_more <= pt.error);
  }
}

TEST_CASE("cumulant routes agree") {
  std::mt19937_64 rng(21);
  for (int rep = 0; rep < 5; ++rep) {
    const PauliHamiltonian h = random_hamiltonian(4, rng);
    const VectorXcd psi = random_state(16, rng);
    const auto spectral = energy_cumulants(diagonalize(h, psi), 4, 4);
    const auto op = energy_cumulants(h, psi, 4);
    for (int n = 0; n < 4; ++n) CHECK(std::abs(spectral[n] - op[n]) < 1e-8);
    // kappa_2 = <H^2> - <H>^2 from the definition
    const MatrixXcd m = build_hamiltonian<cd>(h);
    const double mean = psi.dot(m * psi).real();
    const double second = (m * psi).squaredNorm();
    CHECK(op[1] * 4 == doctest::Approx(second - mean * mean).epsilon(1e-10));
    for (int n = 1; n <= 3; ++n) {
      const auto dens = cumulant_densities(h, psi, n);
      double sum = 0.0;
      for (double x : dens) sum += x;
      CHECK(std::abs(sum - 4 * op[n - 1]) < 1e-8);
    }
  }
  CHECK_THROWS_AS(energy_cumulants(random_hamiltonian(3, rng), random_state(8, rng), 9), DomainError);
}

TEST_CASE("H^(n) matches the raw-moment recursion up to a constant") {
  // H^(n) = H^n - sum_{j=1}^{n-1} C(n, j) <H^{n-j}> H^(j) with unshifted dense matrices
  std::mt19937_64 rng(3);
  const PauliHamiltonian h = random_hamiltonian(3, rng);
  const VectorXcd psi = random_state(8, rng);
  const MatrixXcd m = build_hamiltonian<cd>(h);
  std::vector<MatrixXcd> power{MatrixXcd::Identity(8, 8)};
  std::vector<double> mom{1.0};
  for (int k = 1; k <= 4; ++k) {
    power.push_back(power.back() * m);
    mom.push_back(psi.dot(power.back() * psi).real());
  }
  std::vector<MatrixXcd> hn(5);
  for (int n = 1; n <= 4; ++n) {
    hn[n] = power[n];
    for (int j = 1; j < n; ++j) hn[n] -= std::tgamma(n + 1.0) / (std::tgamma(j + 1.0) * std::tgamma(n - j + 1.0)) * mom[n - j] * hn[j];
    const HnPolynomial p = build_Hn(h, psi, n);
    const VectorXcd v = random_state(8, rng);
    const VectorXcd diff = apply_Hn(h, p, v) - hn[n] * v;
    const cd c = v.dot(diff);
    CHECK((diff - c * v).norm() < 1e-9 * (1.0 + hn[n].norm()));
    // the constant is the same for every vector
    const VectorXcd w = random_state(8, rng);
    CHECK((apply_Hn(h, p, w) - hn[n] * w - c * w).norm() < 1e-9 * (1.0 + hn[n].norm()));
  }
}

TEST_CASE("deterministic energy and translation invariance") {
  PauliHamiltonian field(5);
  field.add_translates(1.0, {{0, Pauli::Z}});
  const VectorXcd up = product_state(5, "up");
  const auto spectral = energy_cumulants(diagonalize(field, up), 5, 3);
  const auto op = energy_cumulants(field, up, 3);
  CHECK(spectral[0] == 1.0);
  CHECK(spectral[1] == 0.0);
  CHECK(op[0] == 1.0);
  CHECK(op[1] == 0.0);

  const PauliHamiltonian xyz = parse("sum 1 X@i X@i+1\nsum 2 Y@i Y@i+1\nsum 1 Z@i Z@i+1\nsum 0.7 X@i\n", 6);
  const auto dens = cumulant_densities(xyz, product_state(6, "up"), 2);
  for (double x : dens) CHECK(std::abs(x - dens[0]) < 1e-10);
}

TEST_CASE("staggered field: cumulant densities have period 2") {
  const PauliHamiltonian h = parse(kStaggered, 8);
  // The ground state of -sum (XX + 2Y) is invariant under the antiunitary map
  // X -> X, Y -> Y, Z -> -Z, which kills every staggered contribution.
  const PauliHamiltonian h0 = parse("sum -1 X@i X@i+1\nsum -2 Y@i\n", 8);
  const VectorXcd gs = ground_state(h0).vector;
  for (int n = 1; n <= 3; ++n) {
    const auto dens = cumulant_densities(h, gs, n);
    for (int l = 1; l < 8; ++l) CHECK(std::abs(dens[l] - dens[0]) < 1e-10);
  }
  const VectorXcd up = product_state(8, "up");
  const auto e1 = cumulant_densities(h, up, 1);
  const auto e3 = cumulant_densities(h, up, 3);
  for (int l = 0; l + 2 < 8; ++l) {
    CHECK(std::abs(e1[l] - e1[l + 2]) < 1e-10);
    CHECK(std::abs(e3[l] - e3[l + 2]) < 1e-10);
  }
  CHECK(e1[0] == doctest::Approx(1.5 + 0.3));
  CHECK(e1[1] == doctest::Approx(1.5 - 0.3));
  CHECK(std::abs(e3[0] - e3[1]) > 1e-3);
}
