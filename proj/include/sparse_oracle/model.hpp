#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sparse_oracle/errors.hpp"
#include "sparse_oracle/numerics.hpp"
#include "sparse_oracle/rng.hpp"

namespace sparse_oracle {

/**
 * Distribution of a nonzero effect size. Three kinds:
 *   normal(tau2)                 — centered normal with variance tau2
 *   two_point(mu-, mu+, w)       — atoms at mu- < 0 and mu+ > 0, P(mu-) = w
 *   grid(support, density)       — piecewise-linear density on [support.front(),
 *                                  support.back()], renormalized to mass one
 *
 * Every prior must place positive mass on both sides of zero and no mass at
 * zero itself; construction rejects anything else.
 */
class EffectPrior {
 public:
  enum class Kind { normal, two_point, grid };

  static EffectPrior normal(double tau2) {
    if (!(tau2 > 0.0) || !std::isfinite(tau2)) {
      throw config_error("EffectPrior: tau2 must be positive and finite");
    }
    EffectPrior p;
    p.kind_ = Kind::normal;
    p.tau2_ = tau2;
    return p;
  }

  static EffectPrior two_point(double mu_minus, double mu_plus, double w_minus) {
    if (!(mu_minus < 0.0) || !(mu_plus > 0.0)) {
      throw config_error("EffectPrior: two_point needs mu_minus < 0 < mu_plus");
    }
    if (!(w_minus > 0.0) || !(w_minus < 1.0)) {
      throw config_error("EffectPrior: two_point weight must lie strictly in (0,1) "
                         "so both signs carry mass");
    }
    EffectPrior p;
    p.kind_ = Kind::two_point;
    p.mu_minus_ = mu_minus;
    p.mu_plus_ = mu_plus;
    p.w_minus_ = w_minus;
    return p;
  }

  static EffectPrior grid(std::vector<double> support, std::vector<double> density) {
    if (support.size() < 2 || support.size() != density.size()) {
      throw config_error("EffectPrior: grid needs matching support/density of length >= 2");
    }
    for (std::size_t i = 0; i + 1 < support.size(); ++i) {
      if (!(support[i] < support[i + 1])) {
        throw config_error("EffectPrior: grid support must be strictly increasing");
      }
    }
    for (double d : density) {
      if (!(d >= 0.0) || !std::isfinite(d)) {
        throw config_error("EffectPrior: grid density must be nonnegative and finite");
      }
    }
    EffectPrior p;
    p.kind_ = Kind::grid;
    p.support_ = std::move(support);
    p.density_ = std::move(density);
    p.renormalize_grid();
    const double below = p.cdf(0.0);
    if (!(below > 0.0) || !(below < 1.0)) {
      throw config_error("EffectPrior: grid must carry mass on both sides of zero");
    }
    return p;
  }

  Kind kind() const { return kind_; }
  double tau2() const { return tau2_; }
  double mu_minus() const { return mu_minus_; }
  double mu_plus() const { return mu_plus_; }
  double w_minus() const { return w_minus_; }
  const std::vector<double>& support() const { return support_; }
  const std::vector<double>& density() const { return density_; }

  bool has_density() const { return kind_ != Kind::two_point; }

  /// cdf of the effect distribution; a step function for two_point.
  double cdf(double x) const {
    switch (kind_) {
      case Kind::normal:
        return normal_cdf(x / std::sqrt(tau2_));
      case Kind::two_point: {
        double c = 0.0;
        if (x >= mu_minus_) c += w_minus_;
        if (x >= mu_plus_) c += 1.0 - w_minus_;
        return c;
      }
      case Kind::grid: {
        if (x <= support_.front()) return 0.0;
        if (x >= support_.back()) return 1.0;
        const std::size_t i = segment_index(x);
        const double x0 = support_[i], x1 = support_[i + 1];
        const double h = x1 - x0;
        const double t = x - x0;
        const double rho0 = density_[i];
        const double slope = (density_[i + 1] - rho0) / h;
        return std::clamp(cum_[i] + rho0 * t + 0.5 * slope * t * t, 0.0, 1.0);
      }
    }
    return 0.0;
  }

  /// Density at mu; zero outside a grid's support. Rejects two_point priors.
  double pdf(double mu) const {
    switch (kind_) {
      case Kind::normal: {
        const double tau = std::sqrt(tau2_);
        return normal_pdf(mu / tau) / tau;
      }
      case Kind::two_point:
        throw unsupported_prior_error("EffectPrior: two_point prior has no density");
      case Kind::grid: {
        if (mu < support_.front() || mu > support_.back()) return 0.0;
        const std::size_t i = segment_index(mu);
        const double x0 = support_[i], x1 = support_[i + 1];
        const double t = (mu - x0) / (x1 - x0);
        return density_[i] + t * (density_[i + 1] - density_[i]);
      }
    }
    return 0.0;
  }

  /// One-sided density limits (rho(0-), rho(0+)).
  std::pair<double, double> density_at_zero() const {
    switch (kind_) {
      case Kind::normal: {
        const double tau = std::sqrt(tau2_);
        const double rho = 1.0 / (kSqrt2Pi * tau);
        return {rho, rho};
      }
      case Kind::two_point:
        throw unsupported_prior_error("EffectPrior: two_point prior has no density near zero");
      case Kind::grid: {
        if (0.0 < support_.front() || 0.0 > support_.back()) return {0.0, 0.0};
        // interpolated value; one-sided limits coincide except exactly on a node,
        // where both sides use the node value of the piecewise-linear density
        const double rho = pdf(0.0);
        return {rho, rho};
      }
    }
    return {0.0, 0.0};
  }

  /// Mass of the open interval (lo, hi); atoms on the boundary excluded.
  double mass_open_interval(double lo, double hi) const {
    if (!(lo < hi)) return 0.0;
    if (kind_ == Kind::two_point) {
      double m = 0.0;
      if (lo < mu_minus_ && mu_minus_ < hi) m += w_minus_;
      if (lo < mu_plus_ && mu_plus_ < hi) m += 1.0 - w_minus_;
      return m;
    }
    return cdf(hi) - cdf(lo);
  }

  double sample(SplitRng& rng) const {
    switch (kind_) {
      case Kind::normal:
        return std::sqrt(tau2_) * rng.normal();
      case Kind::two_point:
        return rng.uniform() < w_minus_ ? mu_minus_ : mu_plus_;
      case Kind::grid: {
        const double u = rng.uniform();
        return grid_quantile(u);
      }
    }
    return 0.0;
  }

  /// Characteristic width of the distribution, used for integration windows.
  double scale_hint() const {
    switch (kind_) {
      case Kind::normal:
        return std::sqrt(tau2_);
      case Kind::two_point:
        return std::max(-mu_minus_, mu_plus_);
      case Kind::grid:
        return 0.5 * (support_.back() - support_.front());
    }
    return 1.0;
  }

  /// Integration window covering effectively all prior mass.
  std::pair<double, double> density_window(double radius) const {
    switch (kind_) {
      case Kind::normal: {
        const double tau = std::sqrt(tau2_);
        return {-radius * tau, radius * tau};
      }
      case Kind::grid:
        return {support_.front(), support_.back()};
      case Kind::two_point:
        throw unsupported_prior_error("EffectPrior: two_point prior has no density window");
    }
    return {0.0, 0.0};
  }

  std::string to_text() const {
    std::ostringstream os;
    os.precision(17);
    switch (kind_) {
      case Kind::normal:
        os << "kind=normal\n" << "tau2=" << tau2_ << "\n";
        break;
      case Kind::two_point:
        os << "kind=two_point\n"
           << "mu_minus=" << mu_minus_ << "\n"
           << "mu_plus=" << mu_plus_ << "\n"
           << "w_minus=" << w_minus_ << "\n";
        break;
      case Kind::grid: {
        os << "kind=grid\nsupport=";
        for (std::size_t i = 0; i < support_.size(); ++i) os << (i ? "," : "") << support_[i];
        os << "\ndensity=";
        for (std::size_t i = 0; i < density_.size(); ++i) os << (i ? "," : "") << density_[i];
        os << "\n";
        break;
      }
    }
    return os.str();
  }

  static EffectPrior from_text(std::string_view text);

 private:
  EffectPrior() = default;

  std::size_t segment_index(double x) const {
    const auto it = std::upper_bound(support_.begin(), support_.end(), x);
    std::size_t i = static_cast<std::size_t>(it - support_.begin());
    if (i == 0) return 0;
    if (i >= support_.size()) return support_.size() - 2;
    return i - 1;
  }

  void renormalize_grid() {
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < support_.size(); ++i) {
      total += 0.5 * (density_[i] + density_[i + 1]) * (support_[i + 1] - support_[i]);
    }
    if (!(total > 0.0)) throw config_error("EffectPrior: grid density integrates to zero");
    for (auto& d : density_) d /= total;
    cum_.assign(support_.size(), 0.0);
    for (std::size_t i = 0; i + 1 < support_.size(); ++i) {
      cum_[i + 1] = cum_[i] + 0.5 * (density_[i] + density_[i + 1]) * (support_[i + 1] - support_[i]);
    }
    cum_.back() = 1.0;
  }

  /// Exact inverse cdf: within a segment the cdf is quadratic in the offset.
  double grid_quantile(double u) const {
    const auto it = std::upper_bound(cum_.begin(), cum_.end(), u);
    std::size_t i = static_cast<std::size_t>(it - cum_.begin());
    if (i == 0) return support_.front();
    if (i >= cum_.size()) return support_.back();
    --i;
    const double rest = u - cum_[i];
    const double x0 = support_[i], x1 = support_[i + 1];
    const double h = x1 - x0;
    const double rho0 = density_[i];
    const double slope = (density_[i + 1] - rho0) / h;
    // solve rho0*t + slope*t^2/2 = rest for t in [0,h]
    double t;
    if (std::fabs(slope) * h < 1e-12 * std::max(rho0, 1e-300)) {
      t = rho0 > 0.0 ? rest / rho0 : 0.0;
    } else {
      const double disc = rho0 * rho0 + 2.0 * slope * rest;
      t = (-rho0 + std::sqrt(std::max(disc, 0.0))) / slope;
    }
    return x0 + std::clamp(t, 0.0, h);
  }

  Kind kind_ = Kind::normal;
  double tau2_ = 1.0;
  double mu_minus_ = -1.0;
  double mu_plus_ = 1.0;
  double w_minus_ = 0.5;
  std::vector<double> support_;
  std::vector<double> density_;
  std::vector<double> cum_;
};

namespace detail {

inline std::vector<double> parse_csv_doubles(std::string_view s, const char* what) {
  std::vector<double> out;
  std::string token;
  std::istringstream is{std::string(s)};
  while (std::getline(is, token, ',')) {
    try {
      std::size_t pos = 0;
      const double v = std::stod(token, &pos);
      while (pos < token.size() && std::isspace(static_cast<unsigned char>(token[pos]))) ++pos;
      if (pos != token.size()) throw std::invalid_argument("trailing junk");
      out.push_back(v);
    } catch (const std::exception&) {
      throw config_error(std::string("could not parse numeric list for '") + what + "'");
    }
  }
  return out;
}

}  // namespace detail

inline EffectPrior EffectPrior::from_text(std::string_view text) {
  std::string kind;
  double tau2 = 0.0, mu_minus = 0.0, mu_plus = 0.0, w_minus = 0.0;
  bool have_tau2 = false, have_mm = false, have_mp = false, have_w = false;
  std::vector<double> support, density;

  std::istringstream is{std::string(text)};
  std::string line;
  while (std::getline(is, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    line = line.substr(first, last - first + 1);
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw config_error("prior: expected key=value, got '" + line + "'");
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    auto parse_double = [&](bool& flag) {
      try {
        flag = true;
        return std::stod(value);
      } catch (const std::exception&) {
        throw config_error("prior: could not parse value for '" + key + "'");
      }
    };
    if (key == "kind") {
      kind = value;
    } else if (key == "tau2") {
      tau2 = parse_double(have_tau2);
    } else if (key == "mu_minus") {
      mu_minus = parse_double(have_mm);
    } else if (key == "mu_plus") {
      mu_plus = parse_double(have_mp);
    } else if (key == "w_minus") {
      w_minus = parse_double(have_w);
    } else if (key == "support") {
      support = detail::parse_csv_doubles(value, "support");
    } else if (key == "density") {
      density = detail::parse_csv_doubles(value, "density");
    } else {
      throw config_error("prior: unknown key '" + key + "'");
    }
  }

  if (kind == "normal") {
    if (!have_tau2) throw config_error("prior: normal kind needs tau2");
    return EffectPrior::normal(tau2);
  }
  if (kind == "two_point") {
    if (!have_mm || !have_mp || !have_w) {
      throw config_error("prior: two_point kind needs mu_minus, mu_plus, w_minus");
    }
    return EffectPrior::two_point(mu_minus, mu_plus, w_minus);
  }
  if (kind == "grid") {
    if (support.empty() || density.empty()) {
      throw config_error("prior: grid kind needs support and density lines");
    }
    return EffectPrior::grid(std::move(support), std::move(density));
  }
  throw config_error("prior: unknown kind '" + kind + "'");
}

/**
 * Two-groups sampling model: each of m effects is zero with probability 1-p,
 * otherwise drawn from the prior; a test statistic averages n observations
 * with noise level sigma. delta0/deltaA are the per-test losses of a false
 * positive / false negative.
 */
struct TwoGroupsModel {
  double p;
  double sigma;
  long n;
  EffectPrior prior;
  double delta0 = 1.0;
  double deltaA = 1.0;

  TwoGroupsModel(double p_, double sigma_, long n_, EffectPrior prior_, double delta0_ = 1.0,
                 double deltaA_ = 1.0)
      : p(p_), sigma(sigma_), n(n_), prior(std::move(prior_)), delta0(delta0_), deltaA(deltaA_) {
    if (!(p > 0.0 && p < 1.0)) throw config_error("TwoGroupsModel: p must lie in (0,1)");
    if (!(sigma > 0.0)) throw config_error("TwoGroupsModel: sigma must be positive");
    if (n < 1) throw config_error("TwoGroupsModel: n must be >= 1");
    if (!(delta0 > 0.0) || !(deltaA > 0.0)) {
      throw config_error("TwoGroupsModel: losses must be positive");
    }
  }

  /// Sparsity odds (1-p)/p.
  double f() const { return (1.0 - p) / p; }
  /// Loss ratio delta0/deltaA.
  double delta() const { return delta0 / deltaA; }
  /// n * delta^2 * f^2, the scale that drives every asymptotic threshold.
  double v() const {
    const double df = delta() * f();
    return static_cast<double>(n) * df * df;
  }
};

/**
 * Limit quantities of a model sequence; supplied by the caller because they
 * describe the sequence, not any single model. T must equal sigma*sqrt(C) and
 * C1 = 1 - nu(-T,T).
 */
struct AsymptoticParams {
  double C;
  double T;
  double C1;

  static AsymptoticParams from_model(const TwoGroupsModel& model, double C) {
    if (!(C >= 0.0)) throw numeric_domain_error("AsymptoticParams: C must be >= 0");
    const double T = model.sigma * std::sqrt(C);
    const double C1 = 1.0 - model.prior.mass_open_interval(-T, T);
    return {C, T, C1};
  }

  void validate(const TwoGroupsModel& model) const {
    if (!(C >= 0.0)) throw numeric_domain_error("AsymptoticParams: C must be >= 0");
    const double expect = model.sigma * std::sqrt(C);
    if (std::fabs(T - expect) > 1e-12 * std::max(1.0, expect)) {
      throw numeric_domain_error("AsymptoticParams: T must equal sigma*sqrt(C)");
    }
    if (!(C1 >= 0.0 && C1 <= 1.0)) {
      throw numeric_domain_error("AsymptoticParams: C1 must lie in [0,1]");
    }
  }
};

inline double prior_cdf(const EffectPrior& prior, double x) { return prior.cdf(x); }

inline std::pair<double, double> density_at_zero(const EffectPrior& prior) {
  return prior.density_at_zero();
}

namespace detail {

/// P(|Z| >= y | effect mu-distribution), Z the scaled statistic: the signal
/// power of the symmetric rule rejecting |Z| >= y.
inline double alt_rejection_prob(const TwoGroupsModel& model, double y,
                                 const QuadratureSpec& spec) {
  const double s = std::sqrt(static_cast<double>(model.n)) / model.sigma;
  const auto& prior = model.prior;
  if (prior.kind() == EffectPrior::Kind::two_point) {
    auto term = [&](double mu) { return normal_sf(y - s * mu) + normal_sf(y + s * mu); };
    return prior.w_minus() * term(prior.mu_minus()) +
           (1.0 - prior.w_minus()) * term(prior.mu_plus());
  }
  const auto window = prior.density_window(spec.truncation_radius);
  auto integrand = [&](double mu) {
    return prior.pdf(mu) * (normal_sf(y - s * mu) + normal_sf(y + s * mu));
  };
  // the sf terms ramp over a width of 1/s around mu = +-y/s; hand those
  // transition strips to the integrator explicitly
  const double mu_star = y / s;
  const double strip = spec.truncation_radius / s;
  return integrate_partitioned(integrand, spec, window.first, window.second,
                               {-mu_star - strip, -mu_star, -mu_star + strip, mu_star - strip,
                                mu_star, mu_star + strip});
}

}  // namespace detail

/// Marginal survival P(|Z_1| > y) under the mixture.
inline double marginal_abs_z_sf(const TwoGroupsModel& model, double y,
                                const QuadratureSpec& spec = {}) {
  if (!(y >= 0.0)) throw std::invalid_argument("marginal_abs_z_sf: y must be >= 0");
  return (1.0 - model.p) * 2.0 * normal_sf(y) + model.p * detail::alt_rejection_prob(model, y, spec);
}

/// Marginal cdf F(y) = P(|Z_1| <= y) under the mixture; F(0) = 0.
inline double marginal_abs_z_cdf(const TwoGroupsModel& model, double y,
                                 const QuadratureSpec& spec = {}) {
  if (!(y >= 0.0)) throw std::invalid_argument("marginal_abs_z_cdf: y must be >= 0");
  if (y == 0.0) return 0.0;
  const double value = 1.0 - marginal_abs_z_sf(model, y, spec);
  return std::clamp(value, 0.0, 1.0);
}

/// i.i.d. effect draws: zero with probability 1-p, a prior draw otherwise.
/// Accepts the boundary cases p = 0 (all null) and p = 1 (all signal).
inline std::vector<double> sample_effects(const EffectPrior& prior, double p, long m,
                                          SplitRng& rng) {
  if (m < 1) throw std::invalid_argument("sample_effects: m must be >= 1");
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("sample_effects: p must lie in [0,1]");
  std::vector<double> out(static_cast<std::size_t>(m), 0.0);
  for (auto& x : out) {
    if (rng.uniform() < p) x = prior.sample(rng);
  }
  return out;
}

inline std::vector<double> sample_effects(const TwoGroupsModel& model, long m, SplitRng& rng) {
  return sample_effects(model.prior, model.p, m, rng);
}

}  // namespace sparse_oracle
