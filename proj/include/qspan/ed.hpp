#pragma once

#include <Eigen/Dense>
#include <complex>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qspan/weight_function.hpp"

namespace qspan::ed {

// Site l is bit l of the basis index; bit value 0 is spin up (sigma^z = +1).

enum class Pauli : std::uint8_t { X, Y, Z };
enum class Boundary { periodic, open };

struct PauliOp {
  int site;
  Pauli op;
};

struct PauliTerm {
  double coeff = 0.0;
  std::vector<PauliOp> ops;  // sorted by site, one operator per site
  int anchor = 0;            // site whose energy density h_l receives this term
};

/// Spin-1/2 chain Hamiltonian as a real combination of Pauli strings.
class PauliHamiltonian {
 public:
  static constexpr int kMaxSites = 14;

  explicit PauliHamiltonian(int L, Boundary boundary = Boundary::periodic);

  /// Adds coeff * prod ops. The density anchor is the term's own site for one
  /// site, the left site of a nearest-neighbour bond for two (the wrapping bond
  /// (L-1, 0) belongs to L-1). Longer strings are accepted but have no anchor.
  void add(double coeff, std::vector<PauliOp> ops);
  /// Adds sum_l coeff [(-1)^l] * prod ops shifted by l, sites taken mod L for
  /// periodic chains; translates running off an open chain are skipped.
  void add_translates(double coeff, const std::vector<PauliOp>& pattern, bool staggered = false);

  int sites() const noexcept { return L_; }
  Boundary boundary() const noexcept { return boundary_; }
  const std::vector<PauliTerm>& terms() const noexcept { return terms_; }
  Eigen::Index dimension() const noexcept { return Eigen::Index(1) << L_; }
  /// True when every string carries an even number of Y operators.
  bool is_real() const;
  /// Sum of |coefficients|, an upper bound on the operator norm.
  double coefficient_norm() const;
  /// Terms assigned to site l (energy density h_l). Throws if some term
  /// spans more than a nearest-neighbour bond.
  PauliHamiltonian density(int site) const;

 private:
  void add_term(double coeff, std::vector<PauliOp> ops, int anchor);
  int derive_anchor(const std::vector<PauliOp>& ops) const;

  int L_;
  Boundary boundary_;
  std::vector<PauliTerm> terms_;
};

/// Dense matrix of H in the computational basis. Scalar = double requires
/// is_real().
template <class Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> build_hamiltonian(const PauliHamiltonian& h);

/// out = H v without forming the matrix.
void apply_hamiltonian(const PauliHamiltonian& h, const Eigen::VectorXcd& v, Eigen::VectorXcd& out);

/// Computational basis state from "up", "down", or one character per site
/// ('u'/'0' up, 'd'/'1' down, site 0 first).
Eigen::VectorXcd product_state(int L, std::string_view pattern);

struct GroundState {
  Eigen::VectorXcd vector;  // first non-negligible amplitude real positive
  double energy = 0.0;
  double gap = 0.0;          // E_1 - E_0
  bool degenerate = false;   // gap below 1e-10
  std::string warning;
};

GroundState ground_state(const PauliHamiltonian& h);

// --- spectral data --------------------------------------------------------------

struct SpectralDecomposition {
  Eigen::VectorXd energies;   // ascending, full spectrum
  Eigen::VectorXcd overlaps;  // c_n = <E_n|Psi_0>
  std::optional<Eigen::MatrixXcd> basis;

  // Distinct levels carrying weight: E_k, p_k = sum over the level of |c_n|^2.
  // In the basis |k> = P_k|Psi_0> / sqrt(p_k) the state has real amplitudes
  // sqrt(p_k); every quantity below is computed there.
  Eigen::VectorXd level_energies;
  Eigen::VectorXd level_weights;
  std::optional<Eigen::MatrixXcd> level_vectors;  // |k> in the computational basis
  double norm = 0.0;                               // max |E_n|
};

/// Full dense diagonalisation (real solver when H is real). `psi0` must be
/// normalised to 1e-10.
SpectralDecomposition diagonalize(const PauliHamiltonian& h, const Eigen::VectorXcd& psi0, bool keep_basis = false);

/// Largest ||H|E_n> - E_n|E_n>|| over `samples` eigenvectors spread through the spectrum.
double spectral_residual(const PauliHamiltonian& h, const SpectralDecomposition& sd, int samples = 8);

struct AveragedStateSpectrum {
  std::vector<double> eigenvalues;  // descending, clamped at 0
  double t0 = 0.0;
  double t = 0.0;
  std::vector<double> cumulative;  // cumulative[j] = sum_{i <= j} eigenvalues[i]
  std::optional<Eigen::MatrixXcd> vectors;  // columns in the level basis, same order
};

/// Spectrum of rho = \int_0^t dtau/t |Psi_{t0+tau}><Psi_{t0+tau}|.
AveragedStateSpectrum averaged_state(const SpectralDecomposition& sd, double t0, double t, bool want_vectors = false);
/// Same with weight w on [0, w.width()].
AveragedStateSpectrum averaged_state(const SpectralDecomposition& sd, double t0, const WeightFunction& w,
                                     bool want_vectors = false);
/// rho in the level basis, uniform window.
Eigen::MatrixXcd averaged_state_level_matrix(const SpectralDecomposition& sd, double t0, double t);
/// rho in the computational basis (needs keep_basis).
Eigen::MatrixXcd averaged_state_matrix(const SpectralDecomposition& sd, double t0, double t);

/// K(D) = (1/t) \int_0^t e^{-i D tau} dtau, stable at small D t.
std::complex<double> uniform_kernel(double delta, double t);

struct RankResult {
  int dimension = 0;
  double discarded = 0.0;
  double lambda_cut = 0.0;
};

/// Fewest leading eigenvalues whose discarded tail mass is <= eps.
RankResult effective_rank(std::span<const double> descending, double eps);
RankResult effective_rank(const AveragedStateSpectrum& spectrum, double eps);

/// Projector onto the leading `dimension` eigenvectors, in the level basis.
Eigen::MatrixXcd retained_projector(const AveragedStateSpectrum& spectrum, int dimension);

struct RankPoint {
  double t = 0.0;
  double eps = 0.0;
  int dimension = 0;
  double discarded = 0.0;
  double per_sqrt_l = 0.0;
  double prediction_per_sqrt_l = 0.0;
};

/// Effective rank of the uniform average over [0, t] at each time, with the
/// large-L prediction built from e_2 of the same state.
std::vector<RankPoint> rank_curve(const SpectralDecomposition& sd, int L, const std::function<double(double)>& eps_of_t,
                                  std::span<const double> times);

struct ProjectionPoint {
  double t = 0.0;
  double error = 0.0;          // projector of rank D
  double error_fewer = 0.0;    // rank D - 1 (1 when D = 1)
  double error_more = 0.0;     // rank D + 1
};

struct ProjectionProfile {
  double T = 0.0;
  double eps_T = 0.0;
  int dimension = 0;
  std::vector<ProjectionPoint> points;
};

/// 1 - <Psi_t|P|Psi_t> with P the rank-D projector of rho_{0,T} at tail mass eps_T.
ProjectionProfile projection_error(const SpectralDecomposition& sd, double T, double eps_T,
                                   std::span<const double> times);
double projection_error(const SpectralDecomposition& sd, double T, double eps_T, double t);

// --- energy cumulants -----------------------------------------------------------

/// Per-site cumulants e_n = kappa_n / L^d for n = 1..n_max from the energy
/// distribution {E_k, p_k}, through central moments.
std::vector<double> energy_cumulants(const SpectralDecomposition& sd, int L, int n_max, int d = 1);
/// The same from the operator recursion: kappa_1 = <H>,
/// kappa_n = <H^{(n-1)} H> - <H^{(n-1)}><H>.
std::vector<double> energy_cumulants(const PauliHamiltonian& h, const Eigen::VectorXcd& psi0, int n_max);

/// H^{(n)} as a polynomial in the shifted operator H - shift.
struct HnPolynomial {
  int order = 0;
  double shift = 0.0;
  std::vector<double> coeffs;  // coeffs[j] multiplies (H - shift)^j
};

/// H^{(n)} = H^n - sum_{j=1}^{n-1} C(n, j) <H^{n-j}> H^{(j)}, built in the shifted
/// variable with shift = <H>.
HnPolynomial build_Hn(const PauliHamiltonian& h, const Eigen::VectorXcd& psi0, int n);
Eigen::VectorXcd apply_Hn(const PauliHamiltonian& h, const HnPolynomial& p, const Eigen::VectorXcd& v);

/// Cumulant densities e_n(l) = <H^{(n-1)} h_l> - <H^{(n-1)}><h_l> (e_1(l) = <h_l>);
/// sum_l e_n(l) = L e_n.
double cumulant_density(const PauliHamiltonian& h, const Eigen::VectorXcd& psi0, int site, int n);
std::vector<double> cumulant_densities(const PauliHamiltonian& h, const Eigen::VectorXcd& psi0, int n);

// --- return amplitude -----------------------------------------------------------

/// <Psi_t|Psi_0> = sum_k p_k e^{i E_k t}.
std::complex<double> loschmidt_amplitude(const SpectralDecomposition& sd, double t);
/// First t in (0, t_max] with |<Psi_t|Psi_0>| < threshold, located on a grid
/// of step dt and refined by bisection; nullopt if none.
std::optional<double> first_time_below(const SpectralDecomposition& sd, double threshold, double t_max, double dt);

// --- text format ----------------------------------------------------------------

/// Parsed Hamiltonian file; see docs/hamiltonian_format.md.
struct HamiltonianModel {
  struct Line {
    bool translated = false;
    bool staggered = false;
    double coeff = 0.0;
    std::vector<PauliOp> ops;  // site offsets when translated
    int source_line = 0;
  };
  std::optional<int> L;
  Boundary boundary = Boundary::periodic;
  std::vector<Line> lines;
  std::string source;

  PauliHamiltonian instantiate(int L) const;
  PauliHamiltonian instantiate() const;  // uses the file's L
};

HamiltonianModel parse_hamiltonian(std::istream& in, const std::string& source = "<input>");
HamiltonianModel load_hamiltonian(const std::string& path);

}  // namespace qspan::ed
