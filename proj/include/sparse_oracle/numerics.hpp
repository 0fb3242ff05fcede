#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "sparse_oracle/errors.hpp"

namespace sparse_oracle {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kSqrt2 = 1.41421356237309504880;
inline constexpr double kSqrt2Pi = 2.50662827463100050242;
inline constexpr double kInvSqrt2Pi = 0.39894228040143267794;

/// Adaptive quadrature control. The window is [center - r*scale, center + r*scale]
/// with r = truncation_radius, i.e. the radius is measured in units of the
/// integrand's own width.
struct QuadratureSpec {
  double abs_tol = 1e-12;
  int max_panels = 1 << 15;
  double truncation_radius = 12.0;
};

struct RootSpec {
  double x_tol = 1e-13;
  double f_tol = 1e-10;
  int max_iter = 200;
};

inline double normal_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

/// Φ(x). erfc-based: full relative accuracy in the lower tail, representable
/// (no underflow to 0 or 1-collapse in the survival form) out to |x| ≈ 37.
inline double normal_cdf(double x) {
  if (!std::isfinite(x)) throw std::invalid_argument("normal_cdf: non-finite input");
  return 0.5 * std::erfc(-x / kSqrt2);
}

/// 1 - Φ(x), accurate relative error in the upper tail.
inline double normal_sf(double x) {
  if (!std::isfinite(x)) throw std::invalid_argument("normal_sf: non-finite input");
  return 0.5 * std::erfc(x / kSqrt2);
}

/// log(1 - Φ(x)). Direct while erfc is representable, asymptotic Mills series
/// beyond; finite for arbitrarily large x (log-space tail, never -inf for
/// finite input).
inline double log_normal_sf(double x) {
  if (!std::isfinite(x)) throw std::invalid_argument("log_normal_sf: non-finite input");
  if (x < 37.0) {
    return std::log(normal_sf(x));
  }
  const double x2 = x * x;
  // 1 - 1/x² + 3/x⁴ - 15/x⁶ + 105/x⁸; truncation < 1e-13 relative for x ≥ 37
  const double series = 1.0 + (-1.0 + (3.0 + (-15.0 + 105.0 / x2) / x2) / x2) / x2;
  return -0.5 * x2 - std::log(x * kSqrt2Pi) + std::log(series);
}

/// Inverse of Φ. Rational initial guess (Acklam) polished by two Halley steps
/// against the erfc-based cdf; the residual is formed on whichever tail keeps
/// it free of cancellation.
inline double normal_quantile(double q) {
  if (!(q > 0.0 && q < 1.0)) throw std::invalid_argument("normal_quantile: q must lie in (0,1)");

  static const double A[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                              -2.759285104469687e+02, 1.383577518672690e+02,
                              -3.066479806614716e+01, 2.506628277459239e+00};
  static const double B[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                              -1.556989798598866e+02, 6.680131188771972e+01,
                              -1.328068155288572e+01};
  static const double C[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                              -2.400758277161838e+00, -2.549732539343734e+00,
                              4.374664141464968e+00,  2.938163982698783e+00};
  static const double D[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                              2.445134137142996e+00, 3.754408661907416e+00};

  const double plow = 0.02425;
  double x;
  if (q < plow) {
    const double r = std::sqrt(-2.0 * std::log(q));
    x = (((((C[0] * r + C[1]) * r + C[2]) * r + C[3]) * r + C[4]) * r + C[5]) /
        ((((D[0] * r + D[1]) * r + D[2]) * r + D[3]) * r + 1.0);
  } else if (q <= 1.0 - plow) {
    const double r = q - 0.5;
    const double s = r * r;
    x = (((((A[0] * s + A[1]) * s + A[2]) * s + A[3]) * s + A[4]) * s + A[5]) * r /
        (((((B[0] * s + B[1]) * s + B[2]) * s + B[3]) * s + B[4]) * s + 1.0);
  } else {
    const double r = std::sqrt(-2.0 * std::log1p(-q));
    x = -(((((C[0] * r + C[1]) * r + C[2]) * r + C[3]) * r + C[4]) * r + C[5]) /
        ((((D[0] * r + D[1]) * r + D[2]) * r + D[3]) * r + 1.0);
  }

  if (q < 1e-280) {
    // the density underflows around 37.6 sigma, so polish in log space:
    // solve log(1 - Phi(t)) = log q with d/dt log(1 - Phi(t)) ~ -t/(1 - 1/t^2)
    double t = -x;
    const double target = std::log(q);
    for (int i = 0; i < 4; ++i) {
      const double g = log_normal_sf(t) - target;
      t += g * (1.0 - 1.0 / (t * t)) / t;
    }
    return -t;
  }

  for (int i = 0; i < 2; ++i) {
    const double err = (q <= 0.5) ? normal_cdf(x) - q : (1.0 - q) - normal_sf(x);
    const double u = err / normal_pdf(x);
    x -= u / (1.0 + 0.5 * x * u);
  }
  return x;
}

namespace detail {

// 15-point Kronrod extension of 7-point Gauss (positive half, node 0 last).
inline constexpr double kGK15Nodes[8] = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144838258730, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr double kGK15WeightsK[8] = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr double kGK15WeightsG[4] = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct PanelEstimate {
  double value;
  double error;
};

template <class F>
PanelEstimate gk15(F&& f, double a, double b) {
  const double half = 0.5 * (b - a);
  const double mid = 0.5 * (a + b);

  double fv[15];
  for (int i = 0; i < 7; ++i) {
    const double d = half * kGK15Nodes[i];
    fv[i] = f(mid - d);
    fv[14 - i] = f(mid + d);
  }
  fv[7] = f(mid);

  double kron = kGK15WeightsK[7] * fv[7];
  double gauss = kGK15WeightsG[3] * fv[7];
  double resabs = kGK15WeightsK[7] * std::fabs(fv[7]);
  for (int i = 0; i < 7; ++i) {
    const double pair = fv[i] + fv[14 - i];
    kron += kGK15WeightsK[i] * pair;
    resabs += kGK15WeightsK[i] * (std::fabs(fv[i]) + std::fabs(fv[14 - i]));
    if (i % 2 == 1) gauss += kGK15WeightsG[i / 2] * pair;
  }

  const double mean = 0.5 * kron;
  double resasc = kGK15WeightsK[7] * std::fabs(fv[7] - mean);
  for (int i = 0; i < 7; ++i) {
    resasc += kGK15WeightsK[i] * (std::fabs(fv[i] - mean) + std::fabs(fv[14 - i] - mean));
  }

  const double value = kron * half;
  resasc *= std::fabs(half);
  resabs *= std::fabs(half);
  double err = std::fabs((kron - gauss) * half);
  if (resasc != 0.0 && err != 0.0) {
    const double scaled = std::pow(200.0 * err / resasc, 1.5);
    err = resasc * std::min(1.0, scaled);
  }
  const double eps50 = 50.0 * std::numeric_limits<double>::epsilon();
  if (resabs > std::numeric_limits<double>::min() / eps50) {
    err = std::max(err, eps50 * resabs);
  }
  return {value, err};
}

}  // namespace detail

/// Definite integral of f over [lo, hi] by adaptive bisection with 15-point
/// Kronrod panels, refined until the summed error estimate is within abs_tol.
/// Fully deterministic: same inputs give a bit-identical result.
template <class F>
double integrate_interval(F&& f, const QuadratureSpec& spec, double lo, double hi) {
  if (!(spec.abs_tol > 0.0) || spec.max_panels < 1 || !(spec.truncation_radius > 0.0)) {
    throw std::invalid_argument("integrate: invalid QuadratureSpec");
  }
  if (!std::isfinite(lo) || !std::isfinite(hi)) {
    throw std::invalid_argument("integrate: non-finite window");
  }
  if (lo == hi) return 0.0;
  if (lo > hi) std::swap(lo, hi);

  struct Segment {
    double a, b, value, error;
  };

  const double total_width = hi - lo;
  std::vector<Segment> work;
  work.reserve(64);
  {
    auto est = detail::gk15(f, lo, hi);
    work.push_back({lo, hi, est.value, est.error});
  }
  int panels = 1;
  double accepted_value = 0.0;
  double accepted_error = 0.0;

  auto stack_totals = [&work]() {
    std::pair<double, double> t{0.0, 0.0};
    for (const auto& s : work) {
      t.first += s.value;
      t.second += s.error;
    }
    return t;
  };

  while (!work.empty()) {
    const Segment seg = work.back();
    work.pop_back();
    const double width = seg.b - seg.a;
    const double local_tol = spec.abs_tol * (width / total_width);
    const double mid = 0.5 * (seg.a + seg.b);
    const bool unsplittable = !(seg.a < mid && mid < seg.b);
    if (seg.error <= local_tol || unsplittable) {
      accepted_value += seg.value;
      accepted_error += seg.error;
      continue;
    }
    if (++panels > spec.max_panels) {
      const auto pending = stack_totals();
      const double best = accepted_value + seg.value + pending.first;
      const double bound = accepted_error + seg.error + pending.second;
      throw quadrature_error("integrate: panel budget exhausted", best, bound);
    }
    auto left = detail::gk15(f, seg.a, mid);
    auto right = detail::gk15(f, mid, seg.b);
    // push right first so refinement proceeds left to right
    work.push_back({mid, seg.b, right.value, right.error});
    work.push_back({seg.a, mid, left.value, left.error});
  }
  return accepted_value;
}

/// Integral over the window [center - r*scale, center + r*scale].
template <class F>
double integrate(F&& f, const QuadratureSpec& spec, double center, double scale) {
  if (!(scale > 0.0) || !std::isfinite(center)) {
    throw std::invalid_argument("integrate: bad center/scale");
  }
  const double r = spec.truncation_radius * scale;
  return integrate_interval(std::forward<F>(f), spec, center - r, center + r);
}

/// Integral over [lo, hi] split at the supplied interior breakpoints. Used
/// when the integrand has sharp features far narrower than the window (the
/// sampler of a single panel would never see them); each piece gets an equal
/// share of the error budget.
template <class F>
double integrate_partitioned(F&& f, const QuadratureSpec& spec, double lo, double hi,
                             std::vector<double> breakpoints) {
  if (lo == hi) return 0.0;
  if (lo > hi) std::swap(lo, hi);
  std::vector<double> cuts;
  cuts.reserve(breakpoints.size() + 2);
  cuts.push_back(lo);
  std::sort(breakpoints.begin(), breakpoints.end());
  for (double b : breakpoints) {
    if (b > cuts.back() && b < hi) cuts.push_back(b);
  }
  cuts.push_back(hi);

  QuadratureSpec piece = spec;
  piece.abs_tol = spec.abs_tol / static_cast<double>(cuts.size() - 1);
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    total += integrate_interval(f, piece, cuts[i], cuts[i + 1]);
  }
  return total;
}

/// Bracketed root: Illinois-damped secant steps with a bisection safeguard,
/// always keeping a sign change inside the interval. Stops when |f| <= f_tol
/// or the bracket narrows to x_tol.
template <class F>
double find_root(F&& f, double lo, double hi, const RootSpec& spec) {
  if (!(spec.x_tol > 0.0) || !(spec.f_tol > 0.0) || spec.max_iter < 1) {
    throw std::invalid_argument("find_root: invalid RootSpec");
  }
  if (!(lo < hi)) throw std::invalid_argument("find_root: need lo < hi");

  double fa = f(lo), fb = f(hi);
  if (std::isnan(fa) || std::isnan(fb)) throw bracketing_error("find_root: NaN at bracket endpoint");
  if (fa == 0.0) return lo;
  if (fb == 0.0) return hi;
  if ((fa > 0.0) == (fb > 0.0)) {
    throw bracketing_error("find_root: no sign change over [lo, hi]");
  }

  double a = lo, b = hi;
  double scale_a = 1.0, scale_b = 1.0;  // Illinois down-weights of the stale endpoint
  double width_two_ago = b - a;
  for (int iter = 0; iter < spec.max_iter; ++iter) {
    if (std::fabs(fa) <= spec.f_tol) return a;
    if (std::fabs(fb) <= spec.f_tol) return b;
    if (b - a <= spec.x_tol) break;

    const double wa = fa * scale_a;
    const double wb = fb * scale_b;
    double x = (a * wb - b * wa) / (wb - wa);
    const double margin = 0.01 * (b - a);
    const bool force_bisect = (iter >= 2) && (b - a > 0.5 * width_two_ago);
    if (force_bisect || !(x > a + margin && x < b - margin)) x = 0.5 * (a + b);
    if (iter % 2 == 0) width_two_ago = b - a;

    const double fx = f(x);
    if (std::isnan(fx)) throw bracketing_error("find_root: NaN inside bracket");
    if (fx == 0.0) return x;
    if ((fx > 0.0) == (fa > 0.0)) {
      a = x;
      fa = fx;
      scale_a = 1.0;
      scale_b *= 0.5;
    } else {
      b = x;
      fb = fx;
      scale_b = 1.0;
      scale_a *= 0.5;
    }
  }
  return (std::fabs(fa) <= std::fabs(fb)) ? a : b;
}

/// Regularized incomplete beta I_x(a,b), continued fraction (modified Lentz).
inline double betainc(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw std::invalid_argument("betainc: a,b must be positive");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;

  const bool swapped = x >= (a + 1.0) / (a + b + 2.0);
  if (swapped) {
    std::swap(a, b);
    x = 1.0 - x;
  }

  const double front =
      std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
               b * std::log1p(-x)) /
      a;

  const double tiny = 1e-30;
  double c = 1.0;
  double d = 1.0 - (a + b) * x / (a + 1.0);
  if (std::fabs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 500; ++m) {
    const double m2 = 2.0 * m;
    double num = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
    d = 1.0 + num * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + num / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    num = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0));
    d = 1.0 + num * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + num / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::fabs(delta - 1.0) < 1e-15) break;
  }
  const double result = front * h;
  return swapped ? 1.0 - result : result;
}

/// Student-t cdf with df degrees of freedom, via the incomplete beta relation.
inline double student_t_cdf(double t, double df) {
  if (!(df > 0.0)) throw std::invalid_argument("student_t_cdf: df must be positive");
  if (!std::isfinite(t)) throw std::invalid_argument("student_t_cdf: non-finite input");
  if (t == 0.0) return 0.5;
  const double tail = 0.5 * betainc(0.5 * df, 0.5, df / (df + t * t));
  return t > 0.0 ? 1.0 - tail : tail;
}

/// Two-sided tail probability P(|T_df| >= |t|).
inline double student_t_two_sided_p(double t, double df) {
  if (!(df > 0.0)) throw std::invalid_argument("student_t_two_sided_p: df must be positive");
  if (!std::isfinite(t)) throw std::invalid_argument("student_t_two_sided_p: non-finite input");
  return betainc(0.5 * df, 0.5, df / (df + t * t));
}

}  // namespace sparse_oracle
