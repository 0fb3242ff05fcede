#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <limits>
#include <mutex>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "sparse_oracle/errors.hpp"
#include "sparse_oracle/hashing.hpp"
#include "sparse_oracle/regression.hpp"
#include "sparse_oracle/rng.hpp"

namespace sparse_oracle {

enum class Method { oracle, mbic, mbic1, mbic2, mbic3, bh, sd };

inline const char* method_name(Method m) {
  switch (m) {
    case Method::oracle: return "oracle";
    case Method::mbic: return "mBIC";
    case Method::mbic1: return "mBIC1";
    case Method::mbic2: return "mBIC2";
    case Method::mbic3: return "mBIC3";
    case Method::bh: return "BH";
    case Method::sd: return "SD";
  }
  return "?";
}

inline Method method_from_name(const std::string& name) {
  for (Method m : {Method::oracle, Method::mbic, Method::mbic1, Method::mbic2, Method::mbic3,
                   Method::bh, Method::sd}) {
    if (name == method_name(m)) return m;
  }
  throw config_error("unknown method '" + name + "'");
}

inline std::vector<Method> all_methods() {
  return {Method::oracle, Method::mbic,  Method::mbic1, Method::mbic2,
          Method::mbic3,  Method::bh,    Method::sd};
}

enum class SigmaMode { known, unknown };

inline const char* sigma_mode_name(SigmaMode m) {
  return m == SigmaMode::known ? "known" : "unknown";
}

/// One simulation cell: the design size, sparsity, prior scale, which methods
/// run, and the reproducibility seed. p = 0 is allowed as a pure-null scenario.
struct ScenarioConfig {
  int m_total = 256;
  double p = 0.02;
  double tau2 = 0.9;
  SigmaMode sigma_mode = SigmaMode::known;
  std::vector<Method> methods = all_methods();
  double alpha = 0.05;
  int replicates = 10000;
  std::uint64_t seed = 20240101;
  double k_max_fraction = 0.3;
  double noise_sigma = 1.0;  // test hook; the study itself always uses 1

  void validate() const {
    if (m_total < 2 || (m_total & (m_total - 1)) != 0) {
      throw config_error("ScenarioConfig: m_total must be a power of two >= 2");
    }
    if (!(p >= 0.0 && p < 1.0)) throw config_error("ScenarioConfig: p must lie in [0,1)");
    if (!(tau2 > 0.0)) throw config_error("ScenarioConfig: tau2 must be positive");
    if (!(alpha > 0.0 && alpha < 1.0)) throw config_error("ScenarioConfig: alpha must lie in (0,1)");
    if (replicates < 1) throw config_error("ScenarioConfig: replicates must be >= 1");
    if (methods.empty()) throw config_error("ScenarioConfig: no methods configured");
    if (!(k_max_fraction > 0.0 && k_max_fraction <= 1.0)) {
      throw config_error("ScenarioConfig: k_max_fraction must lie in (0,1]");
    }
    if (!(noise_sigma > 0.0)) throw config_error("ScenarioConfig: noise_sigma must be positive");
  }

  int k_max() const {
    const int m = m_total - 1;
    int k = static_cast<int>(k_max_fraction * m_total);
    if (k > m) k = m;
    if (sigma_mode == SigmaMode::unknown && k > m_total - 2) k = m_total - 2;
    return k < 0 ? 0 : k;
  }
};

struct ReplicateResult {
  Method method;
  int fp = 0;
  int fn = 0;
  int k_star = 0;
};

/// Averages of the per-replicate metrics, with Monte-Carlo standard errors.
/// power is NaN when no replicate carried a signal.
struct MetricsSummary {
  double mp = 0.0;
  double fdr = 0.0;
  double power = std::numeric_limits<double>::quiet_NaN();
  long n_power_replicates = 0;
  long replicates = 0;
  double mp_se = 0.0;
  double fdr_se = 0.0;
  double power_se = std::numeric_limits<double>::quiet_NaN();
};

/// sigma-aware closed-form selection threshold for normal effects; reduces to
/// the sigma = 1 rule used throughout the study.
inline double oracle_selection_threshold_sigma(int n, double p, double tau2, double sigma) {
  if (p <= 0.0) return std::numeric_limits<double>::infinity();
  const double s2 = sigma * sigma;
  const double u = static_cast<double>(n) * tau2 / s2;
  return s2 * (u + 1.0) / u * (std::log(u + 1.0) + 2.0 * std::log((1.0 - p) / p));
}

namespace detail {

struct ReplicateData {
  std::vector<std::uint8_t> signal;  // signal[j] for regressor j+1
  RegressionData data;
};

/// Draws one dataset: Bernoulli(p) signal mask over the m_total - 1 regressors
/// (jointly: a binomial count with uniformly random placement), N(0, tau2)
/// coefficients, N(0,1) noise. Stream = (seed, replicate_index).
inline ReplicateData make_replicate_data(const OrthogonalDesign& design,
                                         const ScenarioConfig& cfg, int replicate_index) {
  SplitRng rng(cfg.seed, static_cast<std::uint64_t>(replicate_index));
  const int m_total = design.m_total();
  ReplicateData rep;
  rep.signal.assign(m_total - 1, 0);
  int k_star = 0;
  for (int j = 0; j < m_total - 1; ++j) {
    if (rng.uniform() < cfg.p) {
      rep.signal[j] = 1;
      ++k_star;
    }
  }
  std::vector<double> beta(m_total, 0.0);
  const double tau = std::sqrt(cfg.tau2);
  for (int j = 0; j < m_total - 1; ++j) {
    if (rep.signal[j]) beta[j + 1] = tau * rng.normal();
  }
  rep.data.design = &design;
  rep.data.beta_true = std::move(beta);
  rep.data.sigma = cfg.noise_sigma;
  rep.data.k_star = k_star;
  rep.data.y = rep.data.beta_true;
  design.transform(rep.data.y);
  for (auto& yi : rep.data.y) yi += cfg.noise_sigma * rng.normal();
  return rep;
}

struct PathStats {
  NestedPath path;
  std::vector<double> beta_hat;
};

inline PathStats path_stats(const ReplicateData& rep) {
  PathStats ps;
  ps.beta_hat = ols_orthogonal(rep.data);
  ps.path = nested_path(rep.data, ps.beta_hat);
  return ps;
}

inline ReplicateResult count_prefix(const ReplicateData& rep, const NestedPath& path, Method method,
                                    int k_selected) {
  ReplicateResult r;
  r.method = method;
  r.k_star = rep.data.k_star;
  int tp = 0;
  for (int i = 0; i < k_selected; ++i) {
    if (rep.signal[path.order[i] - 1]) {
      ++tp;
    } else {
      ++r.fp;
    }
  }
  r.fn = rep.data.k_star - tp;
  return r;
}

/// Sorted two-sided p-values along the nested path (ascending, since the path
/// is ordered by decreasing |beta_hat| and both test statistics are monotone
/// in |beta_hat|).
inline std::vector<double> path_pvalues(const ReplicateData& rep, const PathStats& ps,
                                        SigmaMode mode) {
  const int n = rep.data.design->n();
  const double nd = static_cast<double>(n);
  const std::size_t m = ps.path.order.size();
  std::vector<double> p(m);
  if (mode == SigmaMode::known) {
    const double sigma = rep.data.sigma;
    for (std::size_t i = 0; i < m; ++i) {
      p[i] = 2.0 * normal_sf(std::sqrt(ps.path.n_beta2[i]) / sigma);
    }
    return p;
  }
  const double df = nd - 2.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double rss_i = ps.path.rss0 - ps.path.n_beta2[i];
    if (!(rss_i > 0.0)) {
      p[i] = 0.0;
      continue;
    }
    const double t2 = ps.path.n_beta2[i] * df / rss_i;
    p[i] = betainc(0.5 * df, 0.5, df / (df + t2));
  }
  return p;
}

inline std::size_t step_up_size(std::span<const double> sorted_p, double alpha) {
  const double m = static_cast<double>(sorted_p.size());
  std::size_t k_f = 0;
  for (std::size_t i = 1; i <= sorted_p.size(); ++i) {
    if (sorted_p[i - 1] <= alpha * static_cast<double>(i) / m) k_f = i;
  }
  return k_f;
}

inline std::size_t step_down_size(std::span<const double> sorted_p, double alpha) {
  const double m = static_cast<double>(sorted_p.size());
  for (std::size_t i = 1; i <= sorted_p.size(); ++i) {
    if (sorted_p[i - 1] > alpha * static_cast<double>(i) / m) return i - 1;
  }
  return sorted_p.size();
}

inline std::vector<ReplicateResult> evaluate_methods(const ReplicateData& rep,
                                                     const ScenarioConfig& cfg) {
  const int n = rep.data.design->n();
  const int m = rep.data.design->m_total() - 1;
  const PathStats ps = path_stats(rep);

  bool need_pvalues = false;
  for (Method met : cfg.methods) {
    if (met == Method::bh || met == Method::sd) need_pvalues = true;
  }
  std::vector<double> sorted_p;
  if (need_pvalues) sorted_p = path_pvalues(rep, ps, cfg.sigma_mode);

  const bool sigma_known = cfg.sigma_mode == SigmaMode::known;
  const int k_max = cfg.k_max();

  std::vector<ReplicateResult> out;
  out.reserve(cfg.methods.size());
  for (Method met : cfg.methods) {
    switch (met) {
      case Method::oracle: {
        // knows p, tau2 and the true sigma regardless of the study mode
        const double thr =
            oracle_selection_threshold_sigma(n, cfg.p, cfg.tau2, rep.data.sigma);
        int k_sel = 0;
        while (k_sel < static_cast<int>(ps.path.n_beta2.size()) &&
               ps.path.n_beta2[k_sel] > thr) {
          ++k_sel;
        }
        out.push_back(count_prefix(rep, ps.path, met, k_sel));
        break;
      }
      case Method::mbic:
      case Method::mbic1:
      case Method::mbic2:
      case Method::mbic3: {
        Criterion crit;
        switch (met) {
          case Method::mbic: crit = Criterion::mbic(k_max, rep.data.sigma, sigma_known); break;
          case Method::mbic1: crit = Criterion::mbic1(k_max, rep.data.sigma, sigma_known); break;
          case Method::mbic2: crit = Criterion::mbic2(k_max, rep.data.sigma, sigma_known); break;
          default: crit = Criterion::mbic3(k_max, rep.data.sigma, sigma_known); break;
        }
        const int k_sel = best_nested_size(crit, ps.path, m, n);
        out.push_back(count_prefix(rep, ps.path, met, k_sel));
        break;
      }
      case Method::bh: {
        const std::size_t k = step_up_size(sorted_p, cfg.alpha);
        out.push_back(count_prefix(rep, ps.path, met, static_cast<int>(k)));
        break;
      }
      case Method::sd: {
        const std::size_t k = step_down_size(sorted_p, cfg.alpha);
        out.push_back(count_prefix(rep, ps.path, met, static_cast<int>(k)));
        break;
      }
    }
  }
  return out;
}

}  // namespace detail

/// Runs one replicate end to end. Deterministic in (cfg.seed, replicate_index).
inline std::vector<ReplicateResult> run_replicate(const ScenarioConfig& cfg, int replicate_index) {
  cfg.validate();
  const auto design = OrthogonalDesign::hadamard(cfg.m_total);
  const auto rep = detail::make_replicate_data(design, cfg, replicate_index);
  return detail::evaluate_methods(rep, cfg);
}

/// Per-replicate metric means with Monte-Carlo standard errors.
inline MetricsSummary aggregate(std::span<const ReplicateResult> results, int m_total) {
  if (results.empty()) throw std::invalid_argument("aggregate: no replicate results");
  const double denom = static_cast<double>(m_total - 1);

  double mp_sum = 0.0, mp_sq = 0.0;
  double fdr_sum = 0.0, fdr_sq = 0.0;
  double pow_sum = 0.0, pow_sq = 0.0;
  long n_pow = 0;
  for (const auto& r : results) {
    const double mp = (r.fp + r.fn) / denom;
    mp_sum += mp;
    mp_sq += mp * mp;
    const int discoveries = r.fp + (r.k_star - r.fn);
    const double fdr = discoveries > 0 ? static_cast<double>(r.fp) / discoveries : 0.0;
    fdr_sum += fdr;
    fdr_sq += fdr * fdr;
    if (r.k_star > 0) {
      const double pw = static_cast<double>(r.k_star - r.fn) / r.k_star;
      pow_sum += pw;
      pow_sq += pw * pw;
      ++n_pow;
    }
  }

  const auto mean_se = [](double sum, double sq, long count) {
    const double mean = sum / count;
    if (count < 2) return std::pair<double, double>{mean, std::numeric_limits<double>::quiet_NaN()};
    double var = (sq - sum * sum / count) / (count - 1);
    if (var < 0.0) var = 0.0;
    return std::pair<double, double>{mean, std::sqrt(var / count)};
  };

  MetricsSummary s;
  s.replicates = static_cast<long>(results.size());
  std::tie(s.mp, s.mp_se) = mean_se(mp_sum, mp_sq, s.replicates);
  std::tie(s.fdr, s.fdr_se) = mean_se(fdr_sum, fdr_sq, s.replicates);
  s.n_power_replicates = n_pow;
  if (n_pow > 0) {
    std::tie(s.power, s.power_se) = mean_se(pow_sum, pow_sq, n_pow);
  }
  return s;
}

/// Worker pool size: hardware concurrency, capped by SPARSE_ORACLE_THREADS.
inline int effective_worker_count() {
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  int workers = static_cast<int>(hw);
  if (const char* env = std::getenv("SPARSE_ORACLE_THREADS")) {
    try {
      const int cap = std::stoi(env);
      workers = std::min(workers, std::max(1, cap));
    } catch (const std::exception&) {
      throw config_error("SPARSE_ORACLE_THREADS must be an integer");
    }
  }
  return workers;
}

struct ScenarioResult {
  std::vector<Method> methods;
  std::vector<std::vector<ReplicateResult>> per_method;  // parallel to methods
  std::vector<MetricsSummary> summaries;                 // parallel to methods
};

/// Runs every replicate of a scenario (in parallel when workers are available;
/// results are reduced in replicate order, so the outcome does not depend on
/// scheduling) and aggregates per method. workers = 0 picks the environment
/// default.
inline ScenarioResult run_scenario(const ScenarioConfig& cfg, int workers_override = 0) {
  cfg.validate();
  const auto design = OrthogonalDesign::hadamard(cfg.m_total);
  std::vector<std::vector<ReplicateResult>> by_replicate(cfg.replicates);

  const int workers =
      std::min(workers_override > 0 ? workers_override : effective_worker_count(), cfg.replicates);
  if (workers <= 1) {
    for (int i = 0; i < cfg.replicates; ++i) {
      const auto rep = detail::make_replicate_data(design, cfg, i);
      by_replicate[i] = detail::evaluate_methods(rep, cfg);
    }
  } else {
    std::atomic<int> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&]() {
        for (;;) {
          const int i = next.fetch_add(1);
          if (i >= cfg.replicates || failed.load()) return;
          try {
            const auto rep = detail::make_replicate_data(design, cfg, i);
            by_replicate[i] = detail::evaluate_methods(rep, cfg);
          } catch (...) {
            std::lock_guard<std::mutex> lock(error_mutex);
            if (!first_error) first_error = std::current_exception();
            failed.store(true);
            return;
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
  }

  ScenarioResult result;
  result.methods = cfg.methods;
  result.per_method.resize(cfg.methods.size());
  for (auto& v : result.per_method) v.reserve(cfg.replicates);
  for (const auto& reps : by_replicate) {
    for (std::size_t j = 0; j < reps.size(); ++j) result.per_method[j].push_back(reps[j]);
  }
  result.summaries.reserve(cfg.methods.size());
  for (const auto& v : result.per_method) result.summaries.push_back(aggregate(v, cfg.m_total));
  return result;
}

/// One output row of a sweep: a (scenario, method) pair with its metrics.
struct SweepRow {
  std::string scenario_id;
  std::optional<double> beta_exponent;  // empty for the sparsity-grid sweep
  int m_total = 0;
  double p = 0.0;
  SigmaMode sigma_mode = SigmaMode::known;
  double alpha = 0.05;
  int replicates = 0;
  std::uint64_t seed = 0;
  Method method = Method::oracle;
  MetricsSummary metrics;
};

namespace detail {

inline std::string format_p(double p) {
  std::ostringstream os;
  os.precision(10);
  os << p;
  return os.str();
}

inline void append_scenario_rows(std::vector<SweepRow>& rows, const ScenarioConfig& cfg,
                                 const std::string& scenario_id,
                                 std::optional<double> beta_exponent) {
  ScenarioConfig cell = cfg;
  cell.seed = fnv1a64(scenario_id) ^ cfg.seed;
  const auto result = run_scenario(cell);
  for (std::size_t j = 0; j < result.methods.size(); ++j) {
    SweepRow row;
    row.scenario_id = scenario_id;
    row.beta_exponent = beta_exponent;
    row.m_total = cell.m_total;
    row.p = cell.p;
    row.sigma_mode = cell.sigma_mode;
    row.alpha = cell.alpha;
    row.replicates = cell.replicates;
    row.seed = cell.seed;
    row.method = result.methods[j];
    row.metrics = result.summaries[j];
    rows.push_back(std::move(row));
  }
}

}  // namespace detail

inline const std::vector<double>& part1_sparsity_grid() {
  static const std::vector<double> grid{0.001, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2};
  return grid;
}

inline const std::vector<int>& part1_sizes() {
  static const std::vector<int> sizes{256, 1024};
  return sizes;
}

/// Sparsity-grid study: p-grid x {256, 1024} x sigma modes, every configured
/// method, one row per (scenario, method).
inline std::vector<SweepRow> sweep_part1(const ScenarioConfig& base,
                                         std::span<const SigmaMode> modes) {
  base.validate();
  std::vector<SweepRow> rows;
  for (int m : part1_sizes()) {
    for (double p : part1_sparsity_grid()) {
      for (SigmaMode mode : modes) {
        ScenarioConfig cfg = base;
        cfg.m_total = m;
        cfg.p = p;
        cfg.sigma_mode = mode;
        std::ostringstream id;
        id << "p1-m" << m << "-p" << detail::format_p(p) << "-" << sigma_mode_name(mode);
        detail::append_scenario_rows(rows, cfg, id.str(), std::nullopt);
      }
    }
  }
  return rows;
}

inline const std::vector<int>& part2_sizes() {
  static const std::vector<int> sizes{128, 256, 512, 1024, 2048, 4096};
  return sizes;
}

inline const std::vector<double>& part2_beta_grid() {
  static const std::vector<double> betas{1.0, 0.5, 0.25, 0.125};
  return betas;
}

/// p = c_beta * m^(-beta) for each exponent, anchored so p(128) = 0.125.
inline double part2_sparsity(double beta, int m) {
  const double c_beta = 0.125 * std::pow(128.0, beta);
  return c_beta * std::pow(static_cast<double>(m), -beta);
}

/// Growing-size study: m in {128..4096} x beta exponents x sigma modes.
inline std::vector<SweepRow> sweep_part2(const ScenarioConfig& base,
                                         std::span<const SigmaMode> modes) {
  base.validate();
  std::vector<SweepRow> rows;
  for (double beta : part2_beta_grid()) {
    for (int m : part2_sizes()) {
      for (SigmaMode mode : modes) {
        ScenarioConfig cfg = base;
        cfg.m_total = m;
        cfg.p = part2_sparsity(beta, m);
        cfg.sigma_mode = mode;
        std::ostringstream id;
        id << "p2-b" << detail::format_p(beta) << "-m" << m << "-" << sigma_mode_name(mode);
        detail::append_scenario_rows(rows, cfg, id.str(), beta);
      }
    }
  }
  return rows;
}

/// Single-cell run using the base configuration as-is.
inline std::vector<SweepRow> sweep_single(const ScenarioConfig& base) {
  base.validate();
  std::vector<SweepRow> rows;
  std::ostringstream id;
  id << "single-m" << base.m_total << "-p" << detail::format_p(base.p) << "-"
     << sigma_mode_name(base.sigma_mode);
  detail::append_scenario_rows(rows, base, id.str(), std::nullopt);
  return rows;
}

}  // namespace sparse_oracle
