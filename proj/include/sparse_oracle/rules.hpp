#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "sparse_oracle/errors.hpp"
#include "sparse_oracle/model.hpp"
#include "sparse_oracle/numerics.hpp"

namespace sparse_oracle {

struct PValueVector {
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
};

/// Outcome of a multiple-testing procedure. threshold_on_z is the realized
/// cutoff on the |Z| axis (+inf when nothing is rejected): for every
/// threshold-representable rule, rejected[i] <=> |Z_i| >= threshold_on_z.
struct RejectionSet {
  std::vector<std::uint8_t> rejected;
  int k = 0;
  double threshold_on_z = std::numeric_limits<double>::infinity();
};

/// Two-sided p-values p_i = 2(1 - Phi(|z_i|)).
inline PValueVector pvalues_from_z(std::span<const double> z) {
  PValueVector out;
  out.values.reserve(z.size());
  for (double zi : z) {
    if (!std::isfinite(zi)) throw std::invalid_argument("pvalues_from_z: non-finite statistic");
    out.values.push_back(2.0 * normal_sf(std::fabs(zi)));
  }
  return out;
}

namespace detail {

inline void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0,1)");
}

/// |Z| cutoff equivalent to rejecting p-values <= p_cut. Lower-tail form stays
/// accurate for p_cut all the way down to the subnormal range.
inline double z_cutoff_for_p(double p_cut) {
  if (p_cut <= 0.0) return std::numeric_limits<double>::infinity();
  if (p_cut >= 1.0) return 0.0;
  return -normal_quantile(0.5 * p_cut);
}

/// Rejects every p-value <= p_cut (ties at the cutoff all rejected).
inline RejectionSet reject_at(const PValueVector& p, double p_cut) {
  RejectionSet out;
  out.rejected.assign(p.size(), 0);
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p.values[i] <= p_cut) {
      out.rejected[i] = 1;
      ++out.k;
    }
  }
  out.threshold_on_z = out.k > 0 ? z_cutoff_for_p(p_cut) : std::numeric_limits<double>::infinity();
  return out;
}

inline std::vector<double> sorted_pvalues(const PValueVector& p) {
  for (double v : p.values) {
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("p-values must lie in [0,1]");
  }
  std::vector<double> s = p.values;
  std::sort(s.begin(), s.end());
  return s;
}

}  // namespace detail

/// Reject p_i <= alpha/m; controls the family-wise error rate at alpha.
inline RejectionSet bonferroni(const PValueVector& p, double alpha) {
  detail::check_alpha(alpha);
  if (p.size() == 0) throw std::invalid_argument("bonferroni: empty p-value vector");
  const double m = static_cast<double>(p.size());
  RejectionSet out = detail::reject_at(p, alpha / m);
  // the Bonferroni cutoff is fixed, not realized from data
  out.threshold_on_z = detail::z_cutoff_for_p(alpha / m);
  return out;
}

/// Step-up rule: k_F = max{ i : p_(i) <= i alpha / m }, reject the k_F
/// smallest p-values (ties at the realized cutoff all rejected).
inline RejectionSet bh_step_up(const PValueVector& p, double alpha) {
  detail::check_alpha(alpha);
  if (p.size() == 0) throw std::invalid_argument("bh_step_up: empty p-value vector");
  const auto sorted = detail::sorted_pvalues(p);
  const double m = static_cast<double>(p.size());
  std::size_t k_f = 0;
  for (std::size_t i = 1; i <= sorted.size(); ++i) {
    if (sorted[i - 1] <= alpha * static_cast<double>(i) / m) k_f = i;
  }
  if (k_f == 0) {
    RejectionSet none;
    none.rejected.assign(p.size(), 0);
    return none;
  }
  return detail::reject_at(p, sorted[k_f - 1]);
}

/// Step-down rule: k_G = min{ i : p_(i) > i alpha / m } (m+1 when no index
/// stops), reject the k_G - 1 smallest p-values.
inline RejectionSet sd_step_down(const PValueVector& p, double alpha) {
  detail::check_alpha(alpha);
  if (p.size() == 0) throw std::invalid_argument("sd_step_down: empty p-value vector");
  const auto sorted = detail::sorted_pvalues(p);
  const double m = static_cast<double>(p.size());
  std::size_t k_g = sorted.size() + 1;
  for (std::size_t i = 1; i <= sorted.size(); ++i) {
    if (sorted[i - 1] > alpha * static_cast<double>(i) / m) {
      k_g = i;
      break;
    }
  }
  const std::size_t n_reject = k_g - 1;
  if (n_reject == 0) {
    RejectionSet none;
    none.rejected.assign(p.size(), 0);
    return none;
  }
  return detail::reject_at(p, sorted[n_reject - 1]);
}

/// Size of the step-down stop index k_G (m+1 if every index passes).
inline std::size_t sd_stop_index(const PValueVector& p, double alpha) {
  detail::check_alpha(alpha);
  const auto sorted = detail::sorted_pvalues(p);
  const double m = static_cast<double>(p.size());
  for (std::size_t i = 1; i <= sorted.size(); ++i) {
    if (sorted[i - 1] > alpha * static_cast<double>(i) / m) return i;
  }
  return sorted.size() + 1;
}

/// Realized step-up threshold on the |Z| axis:
/// min(c_Bon, inf{ y : 2(1-Phi(y)) / (#{|Z_j| >= y}/m) <= alpha }).
/// Thresholding |Z_i| at the result reproduces bh_step_up exactly.
inline double random_threshold_bh(std::span<const double> z, double alpha) {
  detail::check_alpha(alpha);
  if (z.empty()) throw std::invalid_argument("random_threshold_bh: empty statistic vector");
  const double m = static_cast<double>(z.size());
  const double c_bon = detail::z_cutoff_for_p(alpha / m);

  std::vector<double> abs_z(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (!std::isfinite(z[i])) throw std::invalid_argument("random_threshold_bh: non-finite statistic");
    abs_z[i] = std::fabs(z[i]);
  }
  std::sort(abs_z.begin(), abs_z.end(), std::greater<double>());

  double c_hat = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < abs_z.size(); ++i) {
    // ties: the empirical count at y = abs_z[i] spans the whole equal run
    std::size_t count = i + 1;
    while (count < abs_z.size() && abs_z[count] == abs_z[i]) ++count;
    const double tail = 2.0 * normal_sf(abs_z[i]);
    if (tail * m <= alpha * static_cast<double>(count)) {
      c_hat = std::min(c_hat, abs_z[i]);
    }
  }
  return std::min(c_bon, c_hat);
}

/// Bayesian FDR of the symmetric fixed rule rejecting |Z| >= c:
/// (1-p) t1(c) / [ (1-p) t1(c) + p (1 - t2(c)) ].
inline double bfdr(const TwoGroupsModel& model, double c, const QuadratureSpec& spec = {}) {
  if (!(c >= 0.0)) throw std::invalid_argument("bfdr: c must be >= 0");
  const double t1 = 2.0 * normal_sf(c);
  const double detect = detail::alt_rejection_prob(model, c, spec);
  const double null_part = (1.0 - model.p) * t1;
  const double alt_part = model.p * detect;
  if (null_part + alt_part <= 0.0) return 0.0;
  return null_part / (null_part + alt_part);
}

/// Threshold c with bfdr(c) = alpha. Exists and is unique for
/// alpha in (0, 1-p): bfdr decreases continuously from 1-p to 0.
inline double bfdr_threshold(const TwoGroupsModel& model, double alpha,
                             const QuadratureSpec& spec = {}) {
  detail::check_alpha(alpha);
  if (!(alpha < 1.0 - model.p)) {
    throw no_solution_error("bfdr_threshold: no solution, needs alpha < 1 - p");
  }
  double hi = 1.0;
  double bf_hi = bfdr(model, hi, spec);
  while (bf_hi > alpha && hi < 50.0) {
    hi = std::min(2.0 * hi, 50.0);
    bf_hi = bfdr(model, hi, spec);
  }
  if (bf_hi > alpha) {
    throw numeric_domain_error("bfdr_threshold: no solution below c = 50 (degenerate model)");
  }
  auto g = [&](double c) { return bfdr(model, c, spec) - alpha; };
  RootSpec rs;
  rs.f_tol = 1e-10;
  rs.x_tol = 1e-12;
  return find_root(g, 0.0, hi, rs);
}

/// Leading-order threshold: c^2 = 2 log(f/alpha) - log(2 log(f/alpha))
///                                + 2 log(sqrt(2)(1-alpha_inf)/(sqrt(pi) C1)).
inline double bfdr_threshold_asymptotic(const TwoGroupsModel& model, const AsymptoticParams& params,
                                        double alpha, double alpha_inf = 0.0) {
  detail::check_alpha(alpha);
  params.validate(model);
  if (!(alpha_inf >= 0.0 && alpha_inf < 1.0)) {
    throw std::invalid_argument("bfdr_threshold_asymptotic: alpha_inf must lie in [0,1)");
  }
  if (!(params.C1 > 0.0)) {
    throw numeric_domain_error("bfdr_threshold_asymptotic: C1 must be positive "
                               "(prior mass outside (-T,T))");
  }
  const double ratio = model.f() / alpha;
  const double L = std::log(ratio);
  if (!(L > 1.0)) {
    throw numeric_domain_error("bfdr_threshold_asymptotic: needs f/alpha > e");
  }
  const double c2 = 2.0 * L - std::log(2.0 * L) +
                    2.0 * std::log(kSqrt2 * (1.0 - alpha_inf) / (std::sqrt(kPi) * params.C1));
  if (!(c2 > 0.0)) {
    throw numeric_domain_error("bfdr_threshold_asymptotic: leading term not positive");
  }
  return std::sqrt(c2);
}

/// Fixed-point threshold of the marginal rule: solves
/// 2(1 - Phi(c)) / (1 - F(c)) = alpha with F the marginal cdf of |Z|.
inline double gw_threshold(const TwoGroupsModel& model, double alpha,
                           const QuadratureSpec& spec = {}) {
  detail::check_alpha(alpha);
  auto h = [&](double c) {
    const double sf = marginal_abs_z_sf(model, c, spec);
    if (sf <= 0.0) return -alpha;
    return 2.0 * normal_sf(c) / sf - alpha;
  };
  // h decreases from 1 - alpha at c = 0
  double hi = 1.0;
  double h_hi = h(hi);
  while (h_hi > 0.0 && hi < 50.0) {
    hi = std::min(2.0 * hi, 50.0);
    h_hi = h(hi);
  }
  if (h_hi > 0.0) {
    throw numeric_domain_error("gw_threshold: no solution below c = 50 (degenerate model)");
  }
  RootSpec rs;
  rs.f_tol = 1e-10;
  rs.x_tol = 1e-12;
  return find_root(h, 0.0, hi, rs);
}

}  // namespace sparse_oracle
