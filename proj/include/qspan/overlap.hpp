#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace qspan {

using cplx = std::complex<double>;

/// Global quench of the transverse field in the Ising chain
/// H = -J sum (s^x s^x + h s^z). `h_i` may be +infinity (fully polarised start).
struct IsingQuench {
  IsingQuench(double h_initial, double h_final, double coupling = 1.0, int grid = 4096);

  double h_i;
  double h_f;
  double J;
  int k_grid;

  bool initial_polarised() const noexcept { return std::isinf(h_i); }
};

struct ModeData {
  double eps_k = 0.0;
  double cos_delta_k = 1.0;
  bool singular = false;  // eps_k == 0: gap closes at this momentum
};

ModeData ising_dispersion(const IsingQuench& q, double k);

struct IsingFValue {
  cplx value;
  bool branch_crossing = false;  // some mode's log argument crossed the negative real axis between grid points
};

/// f(t) = -\int_0^pi dk/2pi log[(1 + cos D_k)/2 + (1 - cos D_k)/2 e^{2 i eps_k t}],
/// trapezoid rule on k_grid + 1 equispaced momenta (the integrand is even and
/// 2pi-periodic in k). Principal log per momentum; Re f >= 0.
cplx ising_f(const IsingQuench& q, double t);
IsingFValue ising_f_checked(const IsingQuench& q, double t);

/// Dynamical free energy f(t) = -L^{-d} log <Psi_t|Psi_0>, as an evaluator with
/// f(0) = 0 and f(-t) = conj f(t). Values for t < 0 are always produced from
/// the t > 0 branch by conjugation.
class DynamicalFreeEnergy {
 public:
  enum class Kind { ising_quench, cumulant_truncation, tabulated };

  static DynamicalFreeEnergy ising(const IsingQuench& q);
  /// f(t) = -sum_n i^n e_n t^n / n!, `per_site` = {e_1, e_2, ...}.
  static DynamicalFreeEnergy cumulants(std::vector<double> per_site);
  /// Samples at strictly increasing times starting at 0, with values[0] == 0.
  /// Local cubic interpolation; evaluation beyond the last time throws.
  static DynamicalFreeEnergy tabulated(std::vector<double> times, std::vector<cplx> values);

  cplx operator()(double t) const;

  Kind kind() const noexcept { return kind_; }
  const std::optional<IsingQuench>& quench() const noexcept { return quench_; }
  const std::vector<double>& cumulant_list() const noexcept { return cumulants_; }
  /// Largest |t| that can be evaluated (infinite except for tabulated data).
  double max_time() const noexcept { return max_time_; }
  /// True when f vanishes identically (no dynamics).
  bool trivial() const noexcept { return trivial_; }
  std::string describe() const;

 private:
  DynamicalFreeEnergy(Kind kind, std::function<cplx(double)> positive_branch);

  Kind kind_;
  std::function<cplx(double)> eval_;
  std::optional<IsingQuench> quench_;
  std::vector<double> cumulants_;
  double max_time_ = std::numeric_limits<double>::infinity();
  bool trivial_ = false;
};

/// e_2 = d^2/dt^2 Re f at t = 0: Romberg extrapolation of 2 Re f(h) / h^2
/// from h0 down by halving.
double second_cumulant_from_f(const DynamicalFreeEnergy& f, double h0 = 0.02, int levels = 6);

enum class MomentScheme { automatic, grid, monte_carlo };

struct MomentOptions {
  MomentScheme scheme = MomentScheme::automatic;
  std::uint64_t seed = 0;
  double rel_tol = 1e-9;          // grid: target relative error; Monte Carlo ignores it
  std::int64_t mc_pairs = 1 << 16;
};

struct MomentEstimate {
  double value = 0.0;
  double error = 0.0;   // refinement difference (grid) or one standard error (Monte Carlo)
  double imag = 0.0;    // imaginary part of the estimator; zero up to round-off
  MomentScheme scheme = MomentScheme::grid;
};

/// tr[rho_t^alpha] = t^{-alpha} \int_{[0,t]^alpha} Re exp(-L^d sum_cyc f(tau_j - tau_{j+1}))
/// for alpha = 2, 3, 4. Throws AccuracyError when the grid scheme cannot reach
/// `rel_tol`.
MomentEstimate moments_quadrature(const DynamicalFreeEnergy& f, double L, int d, double t, int alpha,
                                  const MomentOptions& options = {});

struct RenyiEstimate {
  double value = 0.0;
  double error = 0.0;
  MomentEstimate moment;
};

RenyiEstimate renyi_quadrature(const DynamicalFreeEnergy& f, double L, int d, double t, int alpha,
                               const MomentOptions& options = {});

}  // namespace qspan
