#include "qspan/weight_function.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <memory>
#include <sstream>

#include "qspan/errors.hpp"
#include "qspan/quadrature.hpp"

namespace qspan {

WeightFunction::WeightFunction(Kind kind, double t, std::function<double(double)> eval,
                               std::vector<double> breaks)
    : kind_(kind), t_(t), eval_(std::move(eval)), breaks_(std::move(breaks)) {
  if (!(t > 0.0) || !std::isfinite(t)) throw DomainError("WeightFunction: window width must be positive");
  breaks_.push_back(0.0);
  breaks_.push_back(t);
  std::sort(breaks_.begin(), breaks_.end());
  breaks_.erase(std::remove_if(breaks_.begin(), breaks_.end(),
                               [t](double b) { return b < 0.0 || b > t; }),
                breaks_.end());
  breaks_.erase(std::unique(breaks_.begin(), breaks_.end()), breaks_.end());

  // sup: exact at the knots for piecewise-linear densities, sampled otherwise
  for (double b : breaks_) sup_ = std::max(sup_, eval_(b));
  if (kind_ == Kind::closure) {
    const int samples = 4096;
    for (int i = 0; i <= samples; ++i) sup_ = std::max(sup_, eval_(t * i / samples));
  }
  check_normalisation();
}

WeightFunction WeightFunction::uniform(double t) {
  if (!(t > 0.0)) throw DomainError("WeightFunction::uniform: t must be positive");
  const double value = 1.0 / t;
  return WeightFunction(Kind::uniform, t, [value](double) { return value; }, {});
}

WeightFunction WeightFunction::tabulated(double t, std::vector<double> values) {
  if (values.size() < 2) throw DomainError("WeightFunction::tabulated: need at least two nodes");
  for (double v : values)
    if (!(v >= 0.0) || !std::isfinite(v)) throw DomainError("WeightFunction::tabulated: values must be finite and >= 0");
  const std::size_t n = values.size();
  const double h = t / static_cast<double>(n - 1);
  std::vector<double> knots(n);
  for (std::size_t i = 0; i < n; ++i) knots[i] = h * static_cast<double>(i);
  auto shared = std::make_shared<const std::vector<double>>(std::move(values));
  auto eval = [shared, h, n](double tau) {
    const auto& v = *shared;
    if (tau <= 0.0) return v.front();
    const double pos = tau / h;
    const std::size_t i = std::min(static_cast<std::size_t>(pos), n - 2);
    const double frac = std::min(1.0, pos - static_cast<double>(i));
    return v[i] + (v[i + 1] - v[i]) * frac;
  };
  return WeightFunction(Kind::tabulated, t, eval, std::move(knots));
}

WeightFunction WeightFunction::tabulated_normalized(double t, std::vector<double> values) {
  if (values.size() < 2) throw DomainError("WeightFunction::tabulated: need at least two nodes");
  const double h = t / static_cast<double>(values.size() - 1);
  double mass = 0.0;
  for (std::size_t i = 0; i + 1 < values.size(); ++i) mass += 0.5 * h * (values[i] + values[i + 1]);
  if (!(mass > 0.0)) throw DomainError("WeightFunction::tabulated: density has zero mass");
  for (double& v : values) v /= mass;
  return tabulated(t, std::move(values));
}

WeightFunction WeightFunction::closure(double t, std::function<double(double)> density,
                                       std::vector<double> breaks) {
  if (!density) throw DomainError("WeightFunction::closure: empty evaluator");
  return WeightFunction(Kind::closure, t, std::move(density), std::move(breaks));
}

WeightFunction WeightFunction::named(std::string_view name, double t) {
  if (!(t > 0.0)) throw DomainError("WeightFunction::named: t must be positive");
  if (name == "uniform") return uniform(t);
  if (name == "tent")
    return closure(t, [t](double tau) { return 4.0 * std::min(tau, t - tau) / (t * t); }, {0.5 * t});
  if (name == "ramp") return closure(t, [t](double tau) { return 2.0 * tau / (t * t); });
  if (name == "hann")
    return closure(t, [t](double tau) { return (1.0 - std::cos(2.0 * std::numbers::pi * tau / t)) / t; },
                   {0.25 * t, 0.5 * t, 0.75 * t});
  throw DomainError("WeightFunction::named: unknown density '" + std::string(name) + "'");
}

double WeightFunction::operator()(double tau) const {
  if (tau < 0.0 || tau > t_) return 0.0;
  return eval_(tau);
}

double WeightFunction::integrate(const std::function<double(double)>& g, double tol) const {
  const quad::Result r = quad::adaptive_simpson(g, breaks_, tol);
  if (!r.converged && r.error > 10.0 * tol)
    throw AccuracyError("WeightFunction::integrate: adaptive Simpson did not converge", r.error, tol);
  return r.value;
}

void WeightFunction::check_normalisation() const {
  const double mass = integrate([this](double tau) { return eval_(tau); }, 1e-13);
  if (std::abs(mass - 1.0) > 1e-10) {
    std::ostringstream os;
    os << "WeightFunction: density integrates to " << mass << ", expected 1";
    throw DomainError(os.str());
  }
}

std::string WeightFunction::describe() const {
  switch (kind_) {
    case Kind::uniform: return "uniform";
    case Kind::tabulated: return "tabulated(" + std::to_string(breaks_.size()) + ")";
    case Kind::closure: return "closure";
  }
  return "unknown";
}

}  // namespace qspan
