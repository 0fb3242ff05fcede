#pragma once

#include <cmath>
#include <cstdio>
#include <span>
#include <string>

#include "sparse_oracle/experiment.hpp"
#include "sparse_oracle/hashing.hpp"
#include "sparse_oracle/version.hpp"

namespace sparse_oracle {

namespace detail {

/// Locale-independent float formatting, 10 significant digits.
inline std::string format_float(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace detail

inline constexpr const char* kCsvHeader =
    "scenario_id,method,m,n,p,beta_exponent,sigma_mode,alpha,replicates,seed,"
    "MP,FDR,Power,MP_se,FDR_se,Power_se";

inline std::string csv_row(const SweepRow& row) {
  std::string out;
  out += row.scenario_id;
  out += ',';
  out += method_name(row.method);
  out += ',';
  out += std::to_string(row.m_total);
  out += ',';
  out += std::to_string(row.m_total);  // study design keeps n = m
  out += ',';
  out += detail::format_float(row.p);
  out += ',';
  if (row.beta_exponent) out += detail::format_float(*row.beta_exponent);
  out += ',';
  out += sigma_mode_name(row.sigma_mode);
  out += ',';
  out += detail::format_float(row.alpha);
  out += ',';
  out += std::to_string(row.replicates);
  out += ',';
  out += std::to_string(row.seed);
  out += ',';
  out += detail::format_float(row.metrics.mp);
  out += ',';
  out += detail::format_float(row.metrics.fdr);
  out += ',';
  out += detail::format_float(row.metrics.power);
  out += ',';
  out += detail::format_float(row.metrics.mp_se);
  out += ',';
  out += detail::format_float(row.metrics.fdr_se);
  out += ',';
  out += detail::format_float(row.metrics.power_se);
  return out;
}

/// Full CSV artifact: '#' manifest lines (tool version, root seed, config
/// fingerprint), then the fixed header and one row per (scenario, method).
/// No timestamps or paths, so identical runs are byte-identical.
inline std::string render_csv(std::span<const SweepRow> rows, std::uint64_t seed,
                              const std::string& canonical_config) {
  std::string out;
  out += "# sparse_oracle ";
  out += kVersion;
  out += '\n';
  out += "# seed=";
  out += std::to_string(seed);
  out += '\n';
  char hash[32];
  std::snprintf(hash, sizeof(hash), "%016llx",
                static_cast<unsigned long long>(fnv1a64(canonical_config)));
  out += "# config_hash=";
  out += hash;
  out += '\n';
  out += kCsvHeader;
  out += '\n';
  for (const auto& row : rows) {
    out += csv_row(row);
    out += '\n';
  }
  return out;
}

}  // namespace sparse_oracle
