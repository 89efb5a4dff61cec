#pragma once

#include <cstdint>
#include <vector>

#include "qspan/special.hpp"
#include "qspan/weight_function.hpp"

namespace qspan {

/// Per-site energy cumulants e_1, e_2, ... of the initial state together with
/// the lattice geometry (L^d sites). e_2 > 0 is required by every asymptotic
/// formula below.
class CumulantSeries {
 public:
  CumulantSeries(std::vector<double> per_site, double length, int dim = 1);

  double e(int n) const;  // 1-based
  double e2() const noexcept { return e_[1]; }
  const std::vector<double>& values() const noexcept { return e_; }
  double length() const noexcept { return length_; }
  int dim() const noexcept { return dim_; }

  /// L^d
  double volume() const;
  /// L^{d/2}
  double sqrt_volume() const;
  /// Omega = sqrt(e_2 / 2 pi) L^{d/2}: the scale turning eigenvalues into p = Omega lambda.
  double omega() const;

  CumulantSeries with_length(double length) const;

 private:
  std::vector<double> e_;
  double length_;
  int dim_;
};

struct DistributionPoint {
  double lambda = 0.0;
  double scaled_p = 0.0;  // Omega * lambda
  double phi_density = 0.0;
};

struct RankQuery {
  RankQuery(double eps, double width, double window_start = 0.0);
  double epsilon;
  double t;
  double t0;  // spectra do not depend on it
};

struct RankSolution {
  double x_eps = 0.0;       // cutoff in the universal variable x = Omega t lambda
  double lambda_eps = 0.0;  // cutoff eigenvalue
  double dimension = 0.0;   // effective rank D, real-valued
};

struct WeightedRankSolution {
  double p_eps = 0.0;
  double dimension = 0.0;
};

// Uniform time average over a window of width t --------------------------------

/// tr[rho_t^alpha] ~ alpha^{-1/2} (e_2/2pi)^{(1-alpha)/2} t^{1-alpha} L^{d(1-alpha)/2}
double moment_asymptotic(const CumulantSeries& cs, double t, double alpha);

/// Leading O(L^{-d/2}) relative correction term (negative), from the
/// correction integral J_alpha. Integer alpha >= 2.
special::IntegralEstimate moment_correction(const CumulantSeries& cs, double t, int alpha,
                                            std::uint64_t seed = 0);
double moment_with_correction(const CumulantSeries& cs, double t, int alpha, std::uint64_t seed = 0);

/// Renyi entropy S_alpha, alpha > 0 and != 1. With `with_correction` the
/// leading finite-size correction is folded in through the corrected moment
/// (integer alpha >= 2 only).
double renyi_asymptotic(const CumulantSeries& cs, double t, double alpha, bool with_correction = false,
                        std::uint64_t seed = 0);
double von_neumann_asymptotic(const CumulantSeries& cs, double t);

/// Upper edge of the eigenvalue support, 1 / (Omega t).
double support_edge(const CumulantSeries& cs, double t);

/// Unnormalised eigenvalue density P(lambda) (normalised to the Hilbert-space
/// dimension, hence not integrable at 0). Zero above the support edge.
double eigenvalue_distribution(const CumulantSeries& cs, double t, double lambda);

/// Universal density Pi(x) = theta(1 - x) / sqrt(-pi log x) of x = Omega t lambda.
double pi_universal(double x);
/// \int_0^x Pi = 1 - erf(sqrt(-log x)): probability carried by eigenvalues below x.
double pi_mass_below(double x);
/// Number of eigenvalues above x, in units of Omega t: (2/sqrt(pi)) sqrt(-log x).
double pi_count_above(double x);

RankSolution solve_rank_system(const CumulantSeries& cs, const RankQuery& query);
/// Small-eps closed form of the rank, from the tail expansion of erf^{-1}.
double rank_small_eps(const CumulantSeries& cs, double t, double eps);
/// Rank bound from independent time slices of width delta_t, each with
/// truncation error eps_slice.
double rank_timesliced(const CumulantSeries& cs, double t, double delta_t, double eps_slice);
/// Minimal orthogonalisation time pi L^{-d/2} / (2 sqrt(e_2)).
double mandelstam_tamm_bound(const CumulantSeries& cs);

// Nonuniform averages ------------------------------------------------------------

double weighted_moment(const CumulantSeries& cs, const WeightFunction& w, double alpha);
double weighted_renyi(const CumulantSeries& cs, const WeightFunction& w, double alpha);
double weighted_von_neumann(const CumulantSeries& cs, const WeightFunction& w);
/// Density of Phi in the scaled variable p at eigenvalue lambda.
DistributionPoint weighted_distribution(const CumulantSeries& cs, const WeightFunction& w, double lambda);
/// Probability eps(p) carried by eigenvalues with Omega lambda < p.
double weighted_mass_below(const WeightFunction& w, double p);
WeightedRankSolution weighted_rank_system(const CumulantSeries& cs, const WeightFunction& w, double eps);

}  // namespace qspan
