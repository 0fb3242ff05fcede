#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "sparse_oracle/errors.hpp"
#include "sparse_oracle/numerics.hpp"
#include "sparse_oracle/rng.hpp"
#include "sparse_oracle/rules.hpp"

namespace sparse_oracle {

/**
 * Sylvester-Hadamard design: square n x n matrix of +-1 entries with the
 * first column all ones and X'X = nI exactly in integer arithmetic. n must
 * be a power of two.
 */
class OrthogonalDesign {
 public:
  static OrthogonalDesign hadamard(int m_total) {
    if (m_total < 2 || (m_total & (m_total - 1)) != 0) {
      throw config_error("OrthogonalDesign: m_total must be a power of two >= 2");
    }
    OrthogonalDesign d;
    d.n_ = m_total;
    d.entries_.assign(static_cast<std::size_t>(m_total) * m_total, 1);
    // doubling construction: H_{2k} = [[H_k, H_k], [H_k, -H_k]]
    for (int block = 1; block < m_total; block <<= 1) {
      for (int i = 0; i < block; ++i) {
        for (int j = 0; j < block; ++j) {
          const std::int8_t v = d.entries_[static_cast<std::size_t>(i) * m_total + j];
          d.entries_[static_cast<std::size_t>(i) * m_total + (j + block)] = v;
          d.entries_[static_cast<std::size_t>(i + block) * m_total + j] = v;
          d.entries_[static_cast<std::size_t>(i + block) * m_total + (j + block)] =
              static_cast<std::int8_t>(-v);
        }
      }
    }
    return d;
  }

  int n() const { return n_; }
  int m_total() const { return n_; }

  int entry(int i, int j) const {
    return entries_[static_cast<std::size_t>(i) * n_ + j];
  }

  /// Full integer check of X'X = nI. Quadratic-cubic in n; meant for tests
  /// and moderate sizes.
  bool verify_orthogonality() const {
    for (int a = 0; a < n_; ++a) {
      for (int b = a; b < n_; ++b) {
        long long dot = 0;
        for (int i = 0; i < n_; ++i) {
          dot += static_cast<long long>(entry(i, a)) * entry(i, b);
        }
        if (dot != (a == b ? static_cast<long long>(n_) : 0LL)) return false;
      }
    }
    return true;
  }

  /// In-place fast transform v <- H v; because H is symmetric this is both
  /// X v and X' v.
  void transform(std::span<double> v) const {
    if (static_cast<int>(v.size()) != n_) {
      throw std::invalid_argument("OrthogonalDesign: vector length must equal n");
    }
    for (std::size_t len = 1; len < v.size(); len <<= 1) {
      for (std::size_t i = 0; i < v.size(); i += (len << 1)) {
        for (std::size_t j = i; j < i + len; ++j) {
          const double u = v[j];
          const double w = v[j + len];
          v[j] = u + w;
          v[j + len] = u - w;
        }
      }
    }
  }

  /// Plain-text +-1 grid, one row per line (debugging aid, not a stable format).
  std::string to_text() const {
    std::ostringstream os;
    for (int i = 0; i < n_; ++i) {
      for (int j = 0; j < n_; ++j) {
        if (j) os << ' ';
        os << (entry(i, j) > 0 ? "+1" : "-1");
      }
      os << '\n';
    }
    return os.str();
  }

 private:
  OrthogonalDesign() = default;
  int n_ = 0;
  std::vector<std::int8_t> entries_;
};

/// One simulated regression instance. beta_true[0] is the (zero) intercept;
/// k_star counts the nonzero non-intercept coefficients.
struct RegressionData {
  const OrthogonalDesign* design = nullptr;
  std::vector<double> y;
  std::vector<double> beta_true;
  double sigma = 1.0;
  int k_star = 0;
};

/// y = X beta + sigma * eps with standard normal noise.
inline RegressionData make_regression_data(const OrthogonalDesign& design,
                                           std::vector<double> beta_true, double sigma,
                                           SplitRng& rng) {
  if (static_cast<int>(beta_true.size()) != design.m_total()) {
    throw std::invalid_argument("make_regression_data: beta length must equal m_total");
  }
  RegressionData data;
  data.design = &design;
  data.beta_true = std::move(beta_true);
  data.sigma = sigma;
  data.y = data.beta_true;
  design.transform(data.y);
  for (auto& yi : data.y) yi += sigma * rng.normal();
  data.k_star = 0;
  for (std::size_t i = 1; i < data.beta_true.size(); ++i) {
    if (data.beta_true[i] != 0.0) ++data.k_star;
  }
  return data;
}

/// Least squares under orthogonality: beta_hat = X'y / n.
inline std::vector<double> ols_orthogonal(const RegressionData& data) {
  std::vector<double> beta = data.y;
  data.design->transform(beta);
  const double inv_n = 1.0 / static_cast<double>(data.design->n());
  for (auto& b : beta) b *= inv_n;
  return beta;
}

enum class CriterionFamily { mbic, mbic1, mbic2, mbic3, fdr_penalty };

inline constexpr double kDefaultMbicConstant = -2.0 * 1.38629436111989061883;  // -2 log 4

/**
 * A penalized model-selection criterion. 'constant' is the additive penalty
 * constant (d, d1, d2, d3) or, for the fdr_penalty family, the level alpha.
 * With known sigma the fit term is RSS/sigma^2; otherwise n log RSS.
 */
struct Criterion {
  CriterionFamily family = CriterionFamily::mbic;
  double constant = kDefaultMbicConstant;
  bool sigma_known = true;
  double sigma = 1.0;
  int k_max = 0;

  static Criterion mbic(int k_max, double sigma = 1.0, bool sigma_known = true,
                        double d = kDefaultMbicConstant) {
    return {CriterionFamily::mbic, d, sigma_known, sigma, k_max};
  }
  static Criterion mbic1(int k_max, double sigma = 1.0, bool sigma_known = true, double d1 = 0.0) {
    return {CriterionFamily::mbic1, d1, sigma_known, sigma, k_max};
  }
  static Criterion mbic2(int k_max, double sigma = 1.0, bool sigma_known = true,
                         double d2 = kDefaultMbicConstant) {
    return {CriterionFamily::mbic2, d2, sigma_known, sigma, k_max};
  }
  static Criterion mbic3(int k_max, double sigma = 1.0, bool sigma_known = true,
                         double d3 = kDefaultMbicConstant + 2.0) {
    return {CriterionFamily::mbic3, d3, sigma_known, sigma, k_max};
  }
  static Criterion fdr_penalty(int k_max, double alpha, double sigma = 1.0,
                               bool sigma_known = true) {
    return {CriterionFamily::fdr_penalty, alpha, sigma_known, sigma, k_max};
  }
};

/// Penalty increment pen(k) - pen(k-1) for k >= 1. m counts candidate
/// regressors excluding the intercept.
inline double penalty_increment(const Criterion& crit, int k, int m, int n) {
  if (k < 1 || m < 1 || n < 1) throw std::invalid_argument("penalty_increment: bad arguments");
  const double nd = static_cast<double>(n);
  const double md = static_cast<double>(m);
  const double kd = static_cast<double>(k);
  const double log_nm2 = std::log(nd) + 2.0 * std::log(md);
  switch (crit.family) {
    case CriterionFamily::mbic:
      return log_nm2 + crit.constant;
    case CriterionFamily::mbic1: {
      const double inner = log_nm2 - 2.0 * std::log(kd);
      if (!(inner > 1.0)) {
        throw numeric_domain_error("mbic1: n m^2 / k^2 <= e makes the penalty undefined");
      }
      return log_nm2 + crit.constant - 2.0 * std::log(kd) - std::log(inner);
    }
    case CriterionFamily::mbic2:
      return log_nm2 + crit.constant - 2.0 * std::log(kd);
    case CriterionFamily::mbic3: {
      auto klogk = [](double x) { return x <= 1.0 ? 0.0 : x * std::log(x); };
      return log_nm2 + crit.constant - 2.0 * (klogk(kd) - klogk(kd - 1.0));
    }
    case CriterionFamily::fdr_penalty: {
      const double q = normal_quantile(1.0 - crit.constant * kd / (2.0 * md));
      return q * q;
    }
  }
  return 0.0;
}

/// Total penalty for a model of size k.
inline double penalty_value(const Criterion& crit, int k, int m, int n) {
  if (k < 0) throw std::invalid_argument("penalty_value: k must be >= 0");
  if (k == 0) return 0.0;
  const double nd = static_cast<double>(n);
  const double md = static_cast<double>(m);
  const double kd = static_cast<double>(k);
  const double log_nm2 = std::log(nd) + 2.0 * std::log(md);
  switch (crit.family) {
    case CriterionFamily::mbic:
      return kd * (std::log(nd) + 2.0 * std::log(md) + crit.constant);
    case CriterionFamily::mbic2:
      return kd * (log_nm2 + crit.constant) - 2.0 * std::lgamma(kd + 1.0);
    case CriterionFamily::mbic3:
      return kd * (log_nm2 + crit.constant) - (k <= 1 ? 0.0 : 2.0 * kd * std::log(kd));
    case CriterionFamily::mbic1:
    case CriterionFamily::fdr_penalty: {
      double total = 0.0;
      for (int i = 1; i <= k; ++i) total += penalty_increment(crit, i, m, n);
      return total;
    }
  }
  return 0.0;
}

/// Criterion value at a model of size k with residual sum of squares rss.
inline double criterion_value(const Criterion& crit, int k, double rss, int m, int n) {
  double fit;
  if (crit.sigma_known) {
    fit = rss / (crit.sigma * crit.sigma);
  } else {
    if (!(rss > 0.0)) {
      throw numeric_domain_error("criterion_value: nonpositive RSS is a degenerate fit "
                                 "in unknown-sigma mode");
    }
    fit = static_cast<double>(n) * std::log(rss);
  }
  return fit + penalty_value(crit, k, m, n);
}

struct SelectedModel {
  std::vector<std::uint8_t> included;  // mask over regressors 1..m (intercept excluded)
  int k = 0;
  double criterion_value = 0.0;
  double rss = 0.0;
};

namespace detail {

struct NestedPath {
  std::vector<int> order;        // regressor indices, |beta_hat| descending
  std::vector<double> n_beta2;   // n * beta_hat^2 along the order
  double rss0 = 0.0;             // intercept-only RSS
};

inline NestedPath nested_path(const RegressionData& data, const std::vector<double>& beta_hat) {
  const int m_total = data.design->m_total();
  const double n = static_cast<double>(data.design->n());
  NestedPath path;
  path.order.resize(m_total - 1);
  std::iota(path.order.begin(), path.order.end(), 1);
  std::sort(path.order.begin(), path.order.end(), [&](int a, int b) {
    const double va = beta_hat[a] * beta_hat[a];
    const double vb = beta_hat[b] * beta_hat[b];
    if (va != vb) return va > vb;
    return a < b;
  });
  double yty = 0.0;
  for (double yi : data.y) yty += yi * yi;
  path.rss0 = yty - n * beta_hat[0] * beta_hat[0];
  path.n_beta2.resize(path.order.size());
  for (std::size_t i = 0; i < path.order.size(); ++i) {
    const double b = beta_hat[path.order[i]];
    path.n_beta2[i] = n * b * b;
  }
  return path;
}

/// Minimizing size along the nested path for a given criterion; increments
/// are accumulated so each step is O(1).
inline int best_nested_size(const Criterion& crit, const NestedPath& path, int m, int n) {
  const int k_max = std::min<int>(crit.k_max, static_cast<int>(path.order.size()));
  double value = 0.0;  // criterion relative to the k = 0 model
  double rss = path.rss0;
  double best_value = 0.0;
  int best_k = 0;
  const double sigma2 = crit.sigma * crit.sigma;
  for (int k = 1; k <= k_max; ++k) {
    const double rss_next = rss - path.n_beta2[k - 1];
    if (crit.sigma_known) {
      value += -path.n_beta2[k - 1] / sigma2 + penalty_increment(crit, k, m, n);
    } else {
      if (!(rss_next > 0.0)) {
        throw numeric_domain_error("select_nested: nonpositive RSS (degenerate fit)");
      }
      value += static_cast<double>(n) * (std::log(rss_next) - std::log(rss)) +
               penalty_increment(crit, k, m, n);
    }
    rss = rss_next;
    if (value < best_value) {
      best_value = value;
      best_k = k;
    }
  }
  return best_k;
}

}  // namespace detail

/// Orders regressors by decreasing |beta_hat| (the simple-test ordering under
/// orthogonality) and returns the criterion minimizer over the nested path
/// k = 0..k_max.
inline SelectedModel select_nested(const Criterion& crit, const RegressionData& data) {
  const int m_total = data.design->m_total();
  const int n = data.design->n();
  const int m = m_total - 1;
  if (crit.k_max < 0 || crit.k_max > m) {
    throw std::invalid_argument("select_nested: k_max must lie in [0, m_total - 1]");
  }
  if (!crit.sigma_known && crit.k_max > n - 2) {
    throw std::invalid_argument("select_nested: unknown-sigma mode needs k_max <= n - 2");
  }
  const auto beta_hat = ols_orthogonal(data);
  const auto path = detail::nested_path(data, beta_hat);
  const int best_k = detail::best_nested_size(crit, path, m, n);

  SelectedModel out;
  out.included.assign(m, 0);
  double rss = path.rss0;
  for (int k = 0; k < best_k; ++k) {
    out.included[path.order[k] - 1] = 1;
    rss -= path.n_beta2[k];
  }
  out.k = best_k;
  out.rss = rss;
  out.criterion_value = criterion_value(crit, best_k, rss, m, n);
  return out;
}

/// Exact minimizer over all regressor subsets (testing oracle; m_total <= 16).
inline SelectedModel select_exhaustive(const Criterion& crit, const RegressionData& data) {
  const int m_total = data.design->m_total();
  if (m_total > 16) throw std::invalid_argument("select_exhaustive: m_total must be <= 16");
  const int n = data.design->n();
  const int m = m_total - 1;
  const auto beta_hat = ols_orthogonal(data);
  const double nd = static_cast<double>(n);
  double yty = 0.0;
  for (double yi : data.y) yty += yi * yi;
  const double rss0 = yty - nd * beta_hat[0] * beta_hat[0];

  SelectedModel best;
  best.included.assign(m, 0);
  best.k = 0;
  best.rss = rss0;
  best.criterion_value = criterion_value(crit, 0, rss0, m, n);

  const std::uint32_t limit = 1u << m;
  for (std::uint32_t mask = 1; mask < limit; ++mask) {
    const int k = __builtin_popcount(mask);
    if (k > crit.k_max) continue;
    double rss = rss0;
    for (int j = 0; j < m; ++j) {
      if (mask & (1u << j)) rss -= nd * beta_hat[j + 1] * beta_hat[j + 1];
    }
    if (!crit.sigma_known && !(rss > 0.0)) continue;
    const double value = criterion_value(crit, k, rss, m, n);
    if (value < best.criterion_value) {
      best.criterion_value = value;
      best.k = k;
      best.rss = rss;
      for (int j = 0; j < m; ++j) best.included[j] = (mask >> j) & 1u;
    }
  }
  return best;
}

/// Known-(p, tau2) selection rule with sigma = 1: include regressor i iff
/// n beta_hat_i^2 > ((n tau2 + 1)/(n tau2)) (log(n tau2 + 1) + 2 log((1-p)/p)).
inline double oracle_selection_threshold(int n, double p, double tau2) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("oracle_select: p must lie in (0,1)");
  if (!(tau2 > 0.0)) throw std::invalid_argument("oracle_select: tau2 must be positive");
  const double u = static_cast<double>(n) * tau2;
  return (u + 1.0) / u * (std::log(u + 1.0) + 2.0 * std::log((1.0 - p) / p));
}

inline SelectedModel oracle_select(const RegressionData& data, double p, double tau2) {
  const int m_total = data.design->m_total();
  const int n = data.design->n();
  const double threshold = oracle_selection_threshold(n, p, tau2);
  const auto beta_hat = ols_orthogonal(data);
  const double nd = static_cast<double>(n);

  SelectedModel out;
  out.included.assign(m_total - 1, 0);
  double yty = 0.0;
  for (double yi : data.y) yty += yi * yi;
  out.rss = yty - nd * beta_hat[0] * beta_hat[0];
  for (int i = 1; i < m_total; ++i) {
    const double stat = nd * beta_hat[i] * beta_hat[i];
    if (stat > threshold) {
      out.included[i - 1] = 1;
      ++out.k;
      out.rss -= stat;
    }
  }
  out.criterion_value = std::numeric_limits<double>::quiet_NaN();
  return out;
}

struct SimpleTestResult {
  PValueVector pvalues;                 // one per regressor 1..m
  std::vector<std::uint8_t> degenerate;  // flags zero residual variance
};

/// Coefficient-wise tests from simple one-regressor fits. Known sigma gives
/// z-statistics sqrt(n) beta_hat/sigma; unknown sigma gives t-statistics with
/// the residual variance of that single-regressor fit (df = n - 2).
inline SimpleTestResult simple_regression_tests(const RegressionData& data, bool sigma_known) {
  const int m_total = data.design->m_total();
  const int n = data.design->n();
  if (n < 3) throw std::invalid_argument("simple_regression_tests: needs n >= 3");
  const auto beta_hat = ols_orthogonal(data);
  const double nd = static_cast<double>(n);

  SimpleTestResult out;
  out.pvalues.values.resize(m_total - 1);
  out.degenerate.assign(m_total - 1, 0);

  if (sigma_known) {
    const double s = std::sqrt(nd) / data.sigma;
    for (int i = 1; i < m_total; ++i) {
      out.pvalues.values[i - 1] = 2.0 * normal_sf(std::fabs(s * beta_hat[i]));
    }
    return out;
  }

  double yty = 0.0;
  for (double yi : data.y) yty += yi * yi;
  const double centered = yty - nd * beta_hat[0] * beta_hat[0];
  const double df = nd - 2.0;
  for (int i = 1; i < m_total; ++i) {
    const double rss_i = centered - nd * beta_hat[i] * beta_hat[i];
    if (!(rss_i > 0.0)) {
      out.pvalues.values[i - 1] = 0.0;
      out.degenerate[i - 1] = 1;
      continue;
    }
    const double s2 = rss_i / df;
    const double t = beta_hat[i] * std::sqrt(nd / s2);
    out.pvalues.values[i - 1] = student_t_two_sided_p(t, df);
  }
  return out;
}

struct NestingReport {
  int k_sel;          // size chosen by the fdr_penalty criterion
  int k_g_minus_1;    // step-down rejections
  int k_f;            // step-up rejections
};

/// Runs the fdr_penalty selection over the full nested path together with the
/// step-up/step-down rules on the same known-sigma z-statistics.
inline NestingReport fdr_nesting_check(const RegressionData& data, double alpha) {
  const int m_total = data.design->m_total();
  const auto tests = simple_regression_tests(data, /*sigma_known=*/true);
  const auto bh = bh_step_up(tests.pvalues, alpha);
  const auto sd = sd_step_down(tests.pvalues, alpha);
  const auto crit = Criterion::fdr_penalty(m_total - 1, alpha, data.sigma, /*sigma_known=*/true);
  const auto sel = select_nested(crit, data);
  return {sel.k, sd.k, bh.k};
}

}  // namespace sparse_oracle
