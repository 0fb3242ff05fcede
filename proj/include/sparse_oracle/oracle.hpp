#pragma once

#include <algorithm>
#include <cmath>
#include <utility>

#include "sparse_oracle/errors.hpp"
#include "sparse_oracle/model.hpp"
#include "sparse_oracle/numerics.hpp"

namespace sparse_oracle {

/// Cutoffs of a fixed-threshold rule on the sample-mean scale: accept the
/// null iff the statistic lies in (a, b), with a < 0 < b.
struct ThresholdPair {
  double a;
  double b;
};

/// Threshold pair mapped to the scaled |Z| axis: (sqrt(n)|a|/sigma, sqrt(n) b/sigma).
inline std::pair<double, double> z_scale(const TwoGroupsModel& model, const ThresholdPair& thr) {
  const double s = std::sqrt(static_cast<double>(model.n)) / model.sigma;
  return {s * std::fabs(thr.a), s * thr.b};
}

struct ErrorRates {
  double t1;  // type I: P(reject | null)
  double t2;  // type II: P(accept | signal)
};

struct RiskBreakdown {
  double r1;     // m (1-p) t1 delta0
  double r2;     // m p t2 deltaA
  double total;  // r1 + r2
};

namespace detail {

/// log of J(x) = E_nu[ exp(-n (mu - x)^2 / (2 sigma^2)) ], the Gaussian-kernel
/// smoothing of the prior at x. The full classifier integrand factors as
/// exp(n x^2 / (2 sigma^2)) * J(x); working with log J keeps huge n tractable.
inline double log_kernel_mass(const TwoGroupsModel& model, double x, const QuadratureSpec& spec) {
  const double n = static_cast<double>(model.n);
  const double s2 = model.sigma * model.sigma;
  const auto& prior = model.prior;

  if (prior.kind() == EffectPrior::Kind::two_point) {
    const double e1 = -n * (prior.mu_minus() - x) * (prior.mu_minus() - x) / (2.0 * s2);
    const double e2 = -n * (prior.mu_plus() - x) * (prior.mu_plus() - x) / (2.0 * s2);
    const double top = std::max(e1, e2);
    return top + std::log(prior.w_minus() * std::exp(e1 - top) +
                          (1.0 - prior.w_minus()) * std::exp(e2 - top));
  }

  const double kernel_width = model.sigma / std::sqrt(n);
  double lo, hi;
  if (prior.kind() == EffectPrior::Kind::grid) {
    // density vanishes off the support; the kernel is resolved adaptively inside
    lo = prior.support().front();
    hi = prior.support().back();
  } else {
    lo = x - spec.truncation_radius * kernel_width;
    hi = x + spec.truncation_radius * kernel_width;
  }

  // exponent shift so the kernel peaks at exp(0) on the window (no underflow
  // when x sits far outside a grid support)
  const double dist = std::max({0.0, lo - x, x - hi});
  const double shift = -n * dist * dist / (2.0 * s2);
  auto integrand = [&](double mu) {
    return prior.pdf(mu) * std::exp(-n * (mu - x) * (mu - x) / (2.0 * s2) - shift);
  };

  // the kernel occupies a strip of width ~kernel_width around x, which a grid
  // support window may dwarf; hand that strip to the integrator
  std::vector<double> strips{x - spec.truncation_radius * kernel_width, x,
                             x + spec.truncation_radius * kernel_width};
  // two passes: a coarse estimate fixes the magnitude, the second integrates
  // to a tolerance relative to it
  QuadratureSpec coarse = spec;
  coarse.abs_tol = 1e-8;
  const double rough = integrate_partitioned(integrand, coarse, lo, hi, strips);
  QuadratureSpec fine = spec;
  fine.abs_tol = std::max(1e-280, std::fabs(rough) * 1e-11);
  const double value = integrate_partitioned(integrand, fine, lo, hi, strips);
  if (!(value > 0.0)) {
    throw numeric_domain_error("oracle: classifier integrand vanished numerically");
  }
  return shift + std::log(value);
}

/// Solves log I(x) = log(f delta) for x of the requested sign, where
/// I(x) = exp(n x^2 / (2 sigma^2)) J(x) is strictly monotone on the branch.
inline double solve_classifier_cutoff(const TwoGroupsModel& model, bool negative_side,
                                      const QuadratureSpec& quad, const RootSpec& root) {
  const double n = static_cast<double>(model.n);
  const double s2 = model.sigma * model.sigma;
  const double target = std::log(model.f() * model.delta());

  auto residual = [&](double x) {
    return n * x * x / (2.0 * s2) + log_kernel_mass(model, x, quad) - target;
  };

  const double sign = negative_side ? -1.0 : 1.0;
  // cv_general places the root near sigma*sqrt(log v / n); pad and widen
  const double first_guess =
      model.sigma * std::sqrt((2.0 * std::max(target, 0.0) + std::log(n) + 10.0) / n);
  double outer = std::min(first_guess, 10.0 * model.sigma);
  double inner = 1e-9 * model.sigma / std::sqrt(n);

  double f_outer = residual(sign * outer);
  while (f_outer < 0.0 && outer < 10.0 * model.sigma) {
    outer = std::min(2.0 * outer, 10.0 * model.sigma);
    f_outer = residual(sign * outer);
  }
  if (f_outer < 0.0) {
    throw numeric_domain_error("oracle: no classifier cutoff within 10 sigma (degenerate model)");
  }
  double f_inner = residual(sign * inner);
  int shrink = 0;
  while (f_inner > 0.0 && shrink++ < 60) {
    inner *= 0.125;
    f_inner = residual(sign * inner);
  }
  if (f_inner > 0.0) {
    throw numeric_domain_error("oracle: classifier cutoff collapses to zero (degenerate model)");
  }

  RootSpec rs = root;
  rs.x_tol = std::min(root.x_tol, 1e-10 * model.sigma / std::sqrt(n) + 1e-300);
  if (negative_side) {
    // mirror so the bracket is [inner, outer] on the positive axis
    auto g = [&](double t) { return residual(-t); };
    return -find_root(g, inner, outer, rs);
  }
  return find_root(residual, inner, outer, rs);
}

}  // namespace detail

/// Exact cutoffs of the per-test optimal classifier: x of each sign solving
/// (1-p) delta0 = p deltaA E_nu[exp(n(x mu/sigma^2 - mu^2/(2 sigma^2)))].
inline ThresholdPair oracle_thresholds_exact(const TwoGroupsModel& model,
                                             const QuadratureSpec& quad = {},
                                             const RootSpec& root = {}) {
  const double a = detail::solve_classifier_cutoff(model, true, quad, root);
  const double b = detail::solve_classifier_cutoff(model, false, quad, root);
  return {a, b};
}

/// Leading-order cutoffs. For C = 0 inverts the tail balance
/// sqrt(n) exp(-n a^2/(2 sigma^2)) ~ sqrt(2 pi) sigma rho(0-)/(f delta);
/// for C > 0 the cutoffs converge to (-T, T).
inline ThresholdPair oracle_thresholds_asymptotic(const TwoGroupsModel& model,
                                                  const AsymptoticParams& params) {
  params.validate(model);
  if (params.C > 0.0) {
    // the limit statement assumes a positive density around +-T; for gridded
    // densities this is checkable, so check it
    if (model.prior.kind() == EffectPrior::Kind::grid) {
      if (!(model.prior.pdf(params.T) > 0.0) || !(model.prior.pdf(-params.T) > 0.0)) {
        throw numeric_domain_error(
            "oracle_thresholds_asymptotic: grid prior density vanishes near +-T");
      }
    }
    return {-params.T, params.T};
  }

  if (!(model.v() > 1.0)) {
    throw numeric_domain_error("oracle_thresholds_asymptotic: needs v > 1 (sparse regime)");
  }
  const auto rho = model.prior.density_at_zero();
  if (!(rho.first > 0.0) || !(rho.second > 0.0)) {
    throw unsupported_prior_error(
        "oracle_thresholds_asymptotic: prior density at zero must be positive when C = 0");
  }
  const double n = static_cast<double>(model.n);
  const double fd = model.f() * model.delta();
  auto cutoff = [&](double rho0) {
    const double arg = fd * std::sqrt(n) / (kSqrt2Pi * model.sigma * rho0);
    if (!(arg > 1.0)) {
      throw numeric_domain_error("oracle_thresholds_asymptotic: leading term undefined (arg <= 1)");
    }
    return model.sigma * std::sqrt(2.0 * std::log(arg) / n);
  };
  return {-cutoff(rho.first), cutoff(rho.second)};
}

/// Exact error rates of the rule accepting on (a, b).
inline ErrorRates error_rates(const TwoGroupsModel& model, const ThresholdPair& thr,
                              const QuadratureSpec& spec = {}) {
  if (!(thr.a < 0.0 && thr.b > 0.0)) {
    throw std::invalid_argument("error_rates: thresholds must satisfy a < 0 < b");
  }
  const double s = std::sqrt(static_cast<double>(model.n)) / model.sigma;
  const double t1 = normal_sf(-s * thr.a) + normal_sf(s * thr.b);

  auto accept_prob = [&](double mu) {
    // P(a < Xbar < b | mu) = Phi(s(b-mu)) - Phi(s(a-mu))
    return std::max(0.0, normal_cdf(s * (thr.b - mu)) - normal_cdf(s * (thr.a - mu)));
  };

  double t2;
  const auto& prior = model.prior;
  if (prior.kind() == EffectPrior::Kind::two_point) {
    t2 = prior.w_minus() * accept_prob(prior.mu_minus()) +
         (1.0 - prior.w_minus()) * accept_prob(prior.mu_plus());
  } else {
    const auto window = prior.density_window(spec.truncation_radius);
    auto integrand = [&](double mu) { return prior.pdf(mu) * accept_prob(mu); };
    // the acceptance probability is a slab of width b - a (possibly far below
    // the prior scale) with ramps of width 1/s at both edges
    const double strip = spec.truncation_radius / s;
    t2 = integrate_partitioned(integrand, spec, window.first, window.second,
                               {thr.a - strip, thr.a, thr.a + strip, thr.b - strip, thr.b,
                                thr.b + strip});
  }
  return {std::clamp(t1, 0.0, 1.0), std::clamp(t2, 0.0, 1.0)};
}

/// Additive risk over m tests.
inline RiskBreakdown bayes_risk(const TwoGroupsModel& model, long m, const ErrorRates& rates) {
  if (m < 1) throw std::invalid_argument("bayes_risk: m must be >= 1");
  const double mm = static_cast<double>(m);
  const double r1 = mm * (1.0 - model.p) * rates.t1 * model.delta0;
  const double r2 = mm * model.p * rates.t2 * model.deltaA;
  return {r1, r2, r1 + r2};
}

/// Leading-order risk of the optimal classifier.
inline double oracle_risk_asymptotic(const TwoGroupsModel& model, const AsymptoticParams& params,
                                     long m) {
  params.validate(model);
  if (m < 1) throw std::invalid_argument("oracle_risk_asymptotic: m must be >= 1");
  const double mm = static_cast<double>(m);
  if (params.C > 0.0) {
    return mm * model.p * model.deltaA * model.prior.mass_open_interval(-params.T, params.T);
  }
  if (!(model.v() > 1.0)) {
    throw numeric_domain_error("oracle_risk_asymptotic: needs v > 1 (sparse regime)");
  }
  const auto rho = model.prior.density_at_zero();
  if (!(rho.first > 0.0) || !(rho.second > 0.0)) {
    throw unsupported_prior_error(
        "oracle_risk_asymptotic: prior density at zero must be positive when C = 0");
  }
  const double n = static_cast<double>(model.n);
  return mm * model.p * model.deltaA * model.sigma * std::sqrt(std::log(model.v()) / n) *
         (rho.first + rho.second);
}

/// How far a fixed-threshold rule sits from the optimality window: z terms of
/// n thr^2/sigma^2 = log v + z. Optimality needs z = o(log v) while
/// z + 2 log log v diverges; the caller tracks both along a model sequence.
struct OptimalityDiagnostics {
  double z_a;
  double z_b;
  bool satisfies_optcv1;      // max(|z_a|,|z_b|)/log v below the caller tolerance
  double satisfies_optcv2_trend;  // min(z_a, z_b) + 2 log log v
};

inline OptimalityDiagnostics optimality_diagnostics(const TwoGroupsModel& model, const AsymptoticParams& params,
                                        const ThresholdPair& thr, double tolerance = 0.5) {
  params.validate(model);
  const double v = model.v();
  if (!(v > 1.0)) throw numeric_domain_error("optimality_diagnostics: needs v > 1");
  const double logv = std::log(v);
  const double n = static_cast<double>(model.n);
  const double s2 = model.sigma * model.sigma;
  const double z_a = n * thr.a * thr.a / s2 - logv;
  const double z_b = n * thr.b * thr.b / s2 - logv;
  const bool ok1 = std::max(std::fabs(z_a), std::fabs(z_b)) <= tolerance * logv;
  const double trend = std::min(z_a, z_b) + 2.0 * std::log(logv);
  return {z_a, z_b, ok1, trend};
}

}  // namespace sparse_oracle
