#include "commands.hpp"

#include <cmath>
#include <numbers>
#include <optional>

#include "qspan/asymptotics.hpp"
#include "qspan/ed.hpp"
#include "qspan/errors.hpp"
#include "qspan/overlap.hpp"

namespace qspan::cli {

namespace {

// Config values are read once up front; workers only see these copies.
struct SeriesSpec {
  std::vector<double> cumulants;
  int d = 1;
  std::string weight;

  explicit SeriesSpec(const RunConfig& cfg)
      : cumulants(cfg.numbers("series", "cumulants")),
        d(cfg.integer("series", "d", 1)),
        weight(cfg.text("weight", "density", "uniform")) {}

  CumulantSeries at(double L) const { return CumulantSeries(cumulants, L, d); }
  std::optional<WeightFunction> window(double t) const {
    if (weight == "uniform") return std::nullopt;
    return WeightFunction::named(weight, t);
  }
};

bool integer_alpha(double a) { return a >= 2.0 && a == std::floor(a); }

Cell maybe(const std::optional<double>& x) { return x ? Cell(*x) : Cell(NA{}); }

}  // namespace

// --- asymptotics ----------------------------------------------------------------------

Output cmd_asymptotics(const RunConfig& cfg, const Options& opt) {
  const auto Ls = cfg.grid("grid", "L");
  const auto ts = cfg.grid("grid", "t");
  const auto alphas = cfg.grid("grid", "alpha");
  const auto epss = cfg.numbers("grid", "eps", {0.01});
  const bool correction = cfg.flag("grid", "correction", false);
  const SeriesSpec spec(cfg);
  cfg.finish();
  spec.at(Ls.front());
  spec.window(ts.front());

  struct Cellkey {
    double L, t, alpha, eps;
  };
  std::vector<Cellkey> keys;
  for (double L : Ls)
    for (double t : ts)
      for (double a : alphas)
        for (double e : epss) keys.push_back({L, t, a, e});

  std::vector<std::vector<Cell>> rows(keys.size());
  parallel_for(keys.size(), opt.threads, [&](std::size_t i) {
    const auto [L, t, alpha, eps] = keys[i];
    if (!(alpha > 0.0)) throw DomainError("alpha must be positive");
    const CumulantSeries cs = spec.at(L);
    const auto w = spec.window(t);
    double moment, s_alpha, s_vn, dim, cut;
    std::optional<double> corrected;
    if (w) {
      s_vn = weighted_von_neumann(cs, *w);
      moment = alpha == 1.0 ? 1.0 : weighted_moment(cs, *w, alpha);
      s_alpha = alpha == 1.0 ? s_vn : weighted_renyi(cs, *w, alpha);
      const WeightedRankSolution r = weighted_rank_system(cs, *w, eps);
      dim = r.dimension;
      cut = r.p_eps / cs.omega();
    } else {
      s_vn = von_neumann_asymptotic(cs, t);
      moment = alpha == 1.0 ? 1.0 : moment_asymptotic(cs, t, alpha);
      s_alpha = alpha == 1.0 ? s_vn : renyi_asymptotic(cs, t, alpha);
      if (correction && integer_alpha(alpha)) corrected = renyi_asymptotic(cs, t, alpha, true, opt.seed);
      const RankSolution r = solve_rank_system(cs, RankQuery(eps, t));
      dim = r.dimension;
      cut = r.lambda_eps;
    }
    rows[i] = {L, t, alpha, eps, moment, s_alpha, maybe(corrected), s_vn, dim, cut};
  });

  Table table{"asymptotics", 1,
              {"L", "t", "alpha", "eps", "moment", "S_alpha", "S_alpha_corrected", "S_vN", "D", "lambda_cut"}, {}};
  for (auto& r : rows) table.add(std::move(r));
  Output out;
  out.tables.push_back(std::move(table));
  if (spec.weight != "uniform" && correction)
    out.warnings.push_back("finite-size correction is only available for the uniform window; column left NA");
  return out;
}

// --- distribution --------------------------------------------------------------------

Output cmd_distribution(const RunConfig& cfg, const Options& opt) {
  const auto Ls = cfg.grid("grid", "L");
  const auto ts = cfg.grid("grid", "t");
  const double x_min = cfg.number("x", "min", 1e-6);
  const double x_max = cfg.number("x", "max", 0.999);
  const int points = cfg.integer("x", "points", 200);
  const SeriesSpec spec(cfg);
  cfg.finish();
  spec.at(Ls.front());
  const bool weighted = spec.window(ts.front()).has_value();
  if (!(x_min > 0.0 && x_max < 1.0 && x_min < x_max) || points < 2)
    throw DomainError("[x] needs 0 < min < max < 1 and points >= 2");

  std::vector<double> xs(points);
  for (int i = 0; i < points; ++i)
    xs[i] = std::exp(std::log(x_min) + (std::log(x_max) - std::log(x_min)) * i / (points - 1));

  Table universal{"distribution", 1, {"x", "Pi", "mass_below", "count_above"}, {}};
  for (double x : xs) universal.add({x, pi_universal(x), pi_mass_below(x), pi_count_above(x)});

  struct Key {
    double L, t;
  };
  std::vector<Key> keys;
  for (double L : Ls)
    for (double t : ts) keys.push_back({L, t});
  std::vector<std::vector<std::vector<Cell>>> dens(keys.size()), wrows(keys.size());
  parallel_for(keys.size(), opt.threads, [&](std::size_t i) {
    const auto [L, t] = keys[i];
    const CumulantSeries cs = spec.at(L);
    const auto w = spec.window(t);
    for (double x : xs) {
      const double lambda = x / (cs.omega() * t);
      dens[i].push_back({L, t, lambda, x, eigenvalue_distribution(cs, t, lambda)});
      if (w) {
        const DistributionPoint p = weighted_distribution(cs, *w, lambda);
        wrows[i].push_back({L, t, lambda, p.scaled_p, p.phi_density, weighted_mass_below(*w, p.scaled_p)});
      }
    }
  });

  Output out;
  out.tables.push_back(std::move(universal));
  Table density{"density", 1, {"L", "t", "lambda", "x", "P_lambda"}, {}};
  for (auto& block : dens)
    for (auto& r : block) density.add(std::move(r));
  out.tables.push_back(std::move(density));
  if (weighted) {
    Table wt{"weighted", 1, {"L", "t", "lambda", "p", "Phi_density", "mass_below"}, {}};
    for (auto& block : wrows)
      for (auto& r : block) wt.add(std::move(r));
    out.tables.push_back(std::move(wt));
  }
  return out;
}

// --- rank ---------------------------------------------------------------------------

Output cmd_rank(const RunConfig& cfg, const Options& opt) {
  const auto Ls = cfg.grid("grid", "L");
  const auto ts = cfg.grid("grid", "t");
  const auto epss = cfg.grid("grid", "eps");
  const std::optional<double> slice =
      cfg.has("slicing", "delta_t") ? std::optional<double>(cfg.number("slicing", "delta_t")) : std::nullopt;
  const double eps_slice = cfg.number("slicing", "eps_slice", 0.01);
  const SeriesSpec spec(cfg);
  cfg.finish();
  spec.at(Ls.front());
  spec.window(ts.front());

  struct Key {
    double L, t, eps;
  };
  std::vector<Key> keys;
  for (double L : Ls)
    for (double t : ts)
      for (double e : epss) keys.push_back({L, t, e});
  std::vector<std::vector<Cell>> rows(keys.size());
  parallel_for(keys.size(), opt.threads, [&](std::size_t i) {
    const auto [L, t, eps] = keys[i];
    const CumulantSeries cs = spec.at(L);
    const RankSolution r = solve_rank_system(cs, RankQuery(eps, t));
    std::optional<double> sliced, weighted;
    if (slice) sliced = rank_timesliced(cs, t, *slice, eps_slice);
    if (const auto w = spec.window(t)) weighted = weighted_rank_system(cs, *w, eps).dimension;
    rows[i] = {L, t, eps, r.x_eps, r.lambda_eps, r.dimension, rank_small_eps(cs, t, eps), maybe(sliced),
               maybe(weighted), mandelstam_tamm_bound(cs)};
  });
  Table table{"rank", 1,
              {"L", "t", "eps", "x_eps", "lambda_eps", "D", "D_small_eps", "D_timesliced", "D_weighted",
               "mt_bound"},
              {}};
  for (auto& r : rows) table.add(std::move(r));
  Output out;
  out.tables.push_back(std::move(table));
  return out;
}

// --- ising -----------------------------------------------------------------------------

Output cmd_ising(const RunConfig& cfg, const Options& opt) {
  const IsingQuench q(cfg.number("quench", "h_initial"), cfg.number("quench", "h_final"),
                      cfg.number("quench", "J", 1.0), cfg.integer("quench", "k_grid", 4096));
  const double f_tmax = cfg.number("f", "t_max", 2.0);
  const int f_points = cfg.integer("f", "points", 201);
  const auto Ls = cfg.grid("renyi", "L");
  const double t = cfg.number("renyi", "t", 0.4);
  const auto alphas = cfg.integers("renyi", "alpha");
  const std::string scheme_name = cfg.text("renyi", "scheme", "auto");
  MomentOptions mopt;
  mopt.seed = opt.seed;
  mopt.rel_tol = cfg.number("renyi", "rel_tol", 1e-9);
  mopt.mc_pairs = static_cast<std::int64_t>(cfg.number("renyi", "mc_pairs", 1 << 16));
  cfg.finish();
  if (scheme_name == "auto") mopt.scheme = MomentScheme::automatic;
  else if (scheme_name == "grid") mopt.scheme = MomentScheme::grid;
  else if (scheme_name == "mc") mopt.scheme = MomentScheme::monte_carlo;
  else throw ParseError(cfg.source(), 0, "[renyi] scheme: expected auto, grid or mc");
  if (!(t > 0.0)) throw DomainError("[renyi] t must be positive");
  if (f_points < 2 || !(f_tmax > 0.0)) throw DomainError("[f] needs t_max > 0 and points >= 2");

  const DynamicalFreeEnergy f = DynamicalFreeEnergy::ising(q);
  Output out;

  std::vector<std::vector<Cell>> frows(f_points);
  std::vector<char> crossings(f_points, 0);
  parallel_for(f_points, opt.threads, [&](std::size_t i) {
    const double ti = f_tmax * static_cast<double>(i) / (f_points - 1);
    const IsingFValue v = ising_f_checked(q, ti);
    crossings[i] = v.branch_crossing;
    frows[i] = {ti, v.value.real(), v.value.imag(), static_cast<long long>(v.branch_crossing)};
  });
  Table ftab{"ising_f", 1, {"t", "re_f", "im_f", "branch_crossing"}, {}};
  for (auto& r : frows) ftab.add(std::move(r));
  for (std::size_t i = 0; i < crossings.size(); ++i)
    if (crossings[i]) {
      out.warnings.push_back("f(t) integrand crosses the branch cut from t = " +
                             format_number(f_tmax * static_cast<double>(i) / (f_points - 1)) +
                             " (dynamical transition)");
      break;
    }

  const bool trivial = f.trivial();
  const double e2 = trivial ? 0.0 : second_cumulant_from_f(f);
  struct Key {
    double L;
    int alpha;
  };
  std::vector<Key> keys;
  for (double L : Ls)
    for (int a : alphas) {
      if (a < 2 || a > 4) throw DomainError("[renyi] alpha must be 2, 3 or 4");
      keys.push_back({L, a});
    }
  std::vector<std::vector<Cell>> rows(keys.size());
  parallel_for(keys.size(), opt.threads, [&](std::size_t i) {
    const auto [L, alpha] = keys[i];
    if (trivial) {
      rows[i] = {L, t, static_cast<long long>(alpha), e2, NA{}, NA{}, NA{}, NA{}};
      return;
    }
    const RenyiEstimate r = renyi_quadrature(f, L, 1, t, alpha, mopt);
    const CumulantSeries cs({0.0, e2}, L, 1);
    rows[i] = {L,
               t,
               static_cast<long long>(alpha),
               e2,
               r.value,
               r.error,
               renyi_asymptotic(cs, t, alpha),
               renyi_asymptotic(cs, t, alpha, true, opt.seed)};
  });
  Table table{"ising", 1,
              {"L", "t", "alpha", "e2", "S_quadrature", "S_error", "S_prediction", "S_prediction_corrected"},
              {}};
  for (auto& r : rows) table.add(std::move(r));
  if (trivial) out.warnings.push_back("h_initial == h_final: f vanishes, entropies are undefined (NA)");
  out.tables.push_back(std::move(table));
  out.tables.push_back(std::move(ftab));
  return out;
}

// --- ed -------------------------------------------------------------------------------

namespace {

struct EdCell {
  std::vector<std::vector<Cell>> rank, projection, summary, levels;
  std::vector<std::string> warnings;
};

}  // namespace

Output cmd_ed(const RunConfig& cfg, const Options& opt) {
  ed::HamiltonianModel model = ed::load_hamiltonian(cfg.path("model", "hamiltonian"));
  const std::string initial = cfg.text("model", "initial");
  std::optional<ed::HamiltonianModel> pre;
  std::string pattern;
  if (initial.rfind("ground:", 0) == 0) {
    pre = ed::load_hamiltonian(cfg.resolve(initial.substr(7)));
  } else if (initial.rfind("product:", 0) == 0) {
    pattern = initial.substr(8);
  } else {
    throw ParseError(cfg.source(), 0, "[model] initial: expected ground:<file> or product:<pattern>");
  }
  if (cfg.has("model", "boundary")) {
    const std::string b = cfg.text("model", "boundary");
    if (b != "periodic" && b != "open") throw ParseError(cfg.source(), 0, "[model] boundary: periodic or open");
    model.boundary = b == "open" ? ed::Boundary::open : ed::Boundary::periodic;
    if (pre) pre->boundary = model.boundary;
  }
  const auto Ls = cfg.integers("run", "L");
  const auto ts = cfg.grid("run", "t");
  const double eps_scale = cfg.number("run", "eps_scale", 0.15);
  const double eps_rate = cfg.number("run", "eps_rate", 100.0);
  std::vector<double> Ts;
  int proj_points = 200;
  if (cfg.has_section("projection")) {
    Ts = cfg.grid("projection", "T");
    proj_points = cfg.integer("projection", "points", 200);
  }
  const double echo_threshold = cfg.number("echo", "threshold", 0.5);
  const double echo_tmax = cfg.number("echo", "t_max", 5.0);
  const double echo_dt = cfg.number("echo", "dt", 1e-3);
  cfg.finish();
  if (proj_points < 2) throw DomainError("[projection] points must be >= 2");
  auto eps_of_t = [&](double t) { return eps_scale / std::sqrt(1.0 + eps_rate * t); };

  std::vector<EdCell> cells(Ls.size());
  parallel_for(Ls.size(), opt.threads, [&](std::size_t i) {
    const int L = Ls[i];
    EdCell& cell = cells[i];
    const ed::PauliHamiltonian h = model.instantiate(L);
    Eigen::VectorXcd psi0;
    std::optional<double> gap;
    long long degenerate = 0;
    if (pre) {
      const ed::GroundState gs = ed::ground_state(pre->instantiate(L));
      psi0 = gs.vector;
      gap = gs.gap;
      degenerate = gs.degenerate;
      if (gs.degenerate) cell.warnings.push_back("L = " + std::to_string(L) + ": " + gs.warning);
    } else {
      psi0 = ed::product_state(L, pattern);
    }
    const ed::SpectralDecomposition sd = ed::diagonalize(h, psi0);
    for (const ed::RankPoint& p : ed::rank_curve(sd, L, eps_of_t, ts))
      cell.rank.push_back({static_cast<long long>(L), p.t, p.eps, static_cast<long long>(p.dimension), p.discarded,
                           p.per_sqrt_l, p.prediction_per_sqrt_l});
    for (double T : Ts) {
      std::vector<double> grid(proj_points);
      for (int j = 0; j < proj_points; ++j) grid[j] = T * j / (proj_points - 1);
      const ed::ProjectionProfile prof = ed::projection_error(sd, T, eps_of_t(T), grid);
      for (const auto& p : prof.points)
        cell.projection.push_back({static_cast<long long>(L), T, prof.eps_T, static_cast<long long>(prof.dimension),
                                   p.t, p.error, p.error_fewer, p.error_more});
    }
    const std::vector<double> e = ed::energy_cumulants(sd, L, 4);
    const auto below = ed::first_time_below(sd, echo_threshold, echo_tmax, echo_dt);
    std::optional<double> bound;
    if (e[1] > 0.0) bound = std::numbers::pi / std::sqrt(static_cast<double>(L)) / (2.0 * std::sqrt(e[1]));
    cell.summary.push_back({static_cast<long long>(L), static_cast<long long>(sd.level_energies.size()), e[0], e[1],
                            e[2], e[3], maybe(gap), degenerate, maybe(below), maybe(bound)});
    for (Eigen::Index k = 0; k < sd.level_energies.size(); ++k)
      cell.levels.push_back({static_cast<long long>(L), sd.level_energies(k), sd.level_weights(k)});
  });

  Table rank{"ed_rank", 1, {"L", "t", "eps", "D", "discarded", "D_per_sqrt_L", "prediction_per_sqrt_L"}, {}};
  Table projection{"ed_projection", 1, {"L", "T", "eps_T", "D", "t", "error", "error_D_minus_1", "error_D_plus_1"}, {}};
  Table summary{"ed_summary", 1,
                {"L", "levels", "e1", "e2", "e3", "e4", "ground_gap", "degenerate", "t_below", "mt_bound"},
                {}};
  Table levels{"ed_levels", 1, {"L", "energy", "weight"}, {}};
  Output out;
  for (auto& c : cells) {
    for (auto& r : c.rank) rank.add(std::move(r));
    for (auto& r : c.projection) projection.add(std::move(r));
    for (auto& r : c.summary) summary.add(std::move(r));
    for (auto& r : c.levels) levels.add(std::move(r));
    for (auto& w : c.warnings) out.warnings.push_back(std::move(w));
  }
  out.tables.push_back(std::move(rank));
  if (!Ts.empty()) out.tables.push_back(std::move(projection));
  out.tables.push_back(std::move(summary));
  out.tables.push_back(std::move(levels));
  return out;
}

}  // namespace qspan::cli
