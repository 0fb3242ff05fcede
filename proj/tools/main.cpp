// sparse_oracle command line: threshold calculators, Monte-Carlo sweeps with
// CSV output, and self-check suites.
//
// Exit codes: 0 ok, 2 usage, 3 configuration, 4 numeric domain error,
// 5 verification failure.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sparse_oracle/sparse_oracle.hpp"

namespace so = sparse_oracle;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitConfig = 3;
constexpr int kExitNumeric = 4;
constexpr int kExitVerify = 5;

struct ThresholdArgs {
  std::string rule;
  double p = 0.02;
  double sigma = 1.0;
  long n = 256;
  double tau2 = 0.9;
  std::string prior_file;
  double delta0 = 1.0;
  double deltaA = 1.0;
  double alpha = 0.05;
  double alpha_inf = 0.0;
  long m = 256;
};

so::TwoGroupsModel build_model(const ThresholdArgs& args) {
  so::EffectPrior prior = so::EffectPrior::normal(args.tau2);
  if (!args.prior_file.empty()) {
    std::ifstream in(args.prior_file);
    if (!in) throw so::config_error("cannot open prior file '" + args.prior_file + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    prior = so::EffectPrior::from_text(buf.str());
  }
  return so::TwoGroupsModel(args.p, args.sigma, args.n, std::move(prior), args.delta0,
                            args.deltaA);
}

void print_pair_line(const char* label, const so::TwoGroupsModel& model,
                     const so::ThresholdPair& thr) {
  const auto z = so::z_scale(model, thr);
  std::printf("%-12s a = %.10g  b = %.10g   (|Z| scale: %.10g, %.10g)\n", label, thr.a, thr.b,
              z.first, z.second);
}

void print_symmetric_line(const char* label, const so::TwoGroupsModel& model, double c) {
  const double xbar = c * model.sigma / std::sqrt(static_cast<double>(model.n));
  std::printf("%-12s c = %.10g on |Z| scale   (sample-mean scale: +-%.10g)\n", label, c, xbar);
}

/// Plug-in limit parameters for a single model instance. Any fixed model sits
/// in the C = 0 regime (2 log(delta f)/n vanishes as n grows with p, delta
/// held fixed), so the displayed leading-order formulas use C = 0.
so::AsymptoticParams plugin_params(const so::TwoGroupsModel& model) {
  return so::AsymptoticParams::from_model(model, 0.0);
}

int cmd_threshold(const ThresholdArgs& args) {
  const so::TwoGroupsModel model = build_model(args);
  if (args.rule == "oracle") {
    const auto exact = so::oracle_thresholds_exact(model);
    print_pair_line("exact:", model, exact);
    try {
      const auto params = plugin_params(model);
      const auto asym = so::oracle_thresholds_asymptotic(model, params);
      print_pair_line("asymptotic:", model, asym);
    } catch (const so::numeric_domain_error& e) {
      std::printf("asymptotic:  unavailable (%s)\n", e.what());
    }
    return kExitOk;
  }
  if (args.rule == "bfdr") {
    const double c = so::bfdr_threshold(model, args.alpha);
    print_symmetric_line("exact:", model, c);
    try {
      const auto params = plugin_params(model);
      const double ca = so::bfdr_threshold_asymptotic(model, params, args.alpha, args.alpha_inf);
      print_symmetric_line("asymptotic:", model, ca);
    } catch (const so::numeric_domain_error& e) {
      std::printf("asymptotic:  unavailable (%s)\n", e.what());
    }
    return kExitOk;
  }
  if (args.rule == "gw") {
    const double c = so::gw_threshold(model, args.alpha);
    print_symmetric_line("exact:", model, c);
    return kExitOk;
  }
  if (args.rule == "bonferroni") {
    if (args.m < 1) throw so::config_error("bonferroni rule needs --m >= 1");
    const double c =
        -so::normal_quantile(args.alpha / (2.0 * static_cast<double>(args.m)));
    print_symmetric_line("threshold:", model, c);
    return kExitOk;
  }
  throw so::config_error("unknown rule '" + args.rule + "' (expected oracle|bfdr|gw|bonferroni)");
}

struct SimulateArgs {
  std::string config_path;
  std::string out_path;
  std::optional<std::string> sweep;
  std::optional<std::uint64_t> seed;
  std::optional<int> replicates;
  std::optional<int> m_total;
  std::optional<double> p;
  std::optional<double> alpha;
  std::optional<std::string> sigma_mode;
  std::optional<std::string> methods;
};

int cmd_simulate(const SimulateArgs& args) {
  so::RunConfig cfg;
  if (!args.config_path.empty()) cfg = so::RunConfig::from_file(args.config_path);
  // flag overrides win over file values
  if (args.sweep) cfg.set("sweep", *args.sweep);
  if (args.seed) cfg.scenario.seed = *args.seed;
  if (args.replicates) cfg.scenario.replicates = *args.replicates;
  if (args.m_total) cfg.scenario.m_total = *args.m_total;
  if (args.p) cfg.scenario.p = *args.p;
  if (args.alpha) cfg.scenario.alpha = *args.alpha;
  if (args.sigma_mode) cfg.set_sigma_mode(*args.sigma_mode);
  if (args.methods) cfg.scenario.methods = so::RunConfig::parse_methods(*args.methods);
  cfg.scenario.validate();

  std::vector<so::SweepRow> rows;
  if (cfg.sweep == "part1") {
    rows = so::sweep_part1(cfg.scenario, cfg.modes);
  } else if (cfg.sweep == "part2") {
    rows = so::sweep_part2(cfg.scenario, cfg.modes);
  } else {
    rows = so::sweep_single(cfg.scenario);
  }
  const std::string csv = so::render_csv(rows, cfg.scenario.seed, cfg.canonical_text());
  if (args.out_path.empty()) {
    std::fputs(csv.c_str(), stdout);
  } else {
    std::ofstream out(args.out_path, std::ios::binary);
    if (!out) throw so::config_error("cannot open output file '" + args.out_path + "'");
    out << csv;
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// verify suites

struct CheckReporter {
  int failures = 0;
  void check(bool ok, const std::string& label, const std::string& margin) {
    std::printf("[%s] %s (%s)\n", ok ? "PASS" : "FAIL", label.c_str(), margin.c_str());
    if (!ok) ++failures;
  }
};

so::ScenarioConfig verify_scenario(std::uint64_t seed, int m_total, double p) {
  so::ScenarioConfig cfg;
  cfg.m_total = m_total;
  cfg.p = p;
  cfg.seed = seed;
  return cfg;
}

int verify_nesting(int instances, std::uint64_t seed) {
  CheckReporter rep;
  const auto design = so::OrthogonalDesign::hadamard(64);
  int min_lower_slack = 1 << 30;
  int min_upper_slack = 1 << 30;
  int violations = 0;
  for (int i = 0; i < instances; ++i) {
    so::SplitRng meta(seed, static_cast<std::uint64_t>(i) + (1ULL << 32));
    const double p = 0.005 + 0.295 * meta.uniform();
    auto cfg = verify_scenario(seed, 64, p);
    const auto data = so::detail::make_replicate_data(design, cfg, i);
    const auto report = so::fdr_nesting_check(data.data, 0.05);
    const int lower = report.k_sel - report.k_g_minus_1;
    const int upper = report.k_f - report.k_sel;
    min_lower_slack = std::min(min_lower_slack, lower);
    min_upper_slack = std::min(min_upper_slack, upper);
    if (lower < 0 || upper < 0) ++violations;
  }
  rep.check(violations == 0, "step-down <= penalized selection <= step-up on every instance",
            "violations=" + std::to_string(violations) +
                ", min slack low=" + std::to_string(min_lower_slack) +
                " high=" + std::to_string(min_upper_slack));
  return rep.failures == 0 ? kExitOk : kExitVerify;
}

int verify_oracle_equivalence(int instances, std::uint64_t seed) {
  CheckReporter rep;
  const auto design = so::OrthogonalDesign::hadamard(64);
  int mismatches = 0;
  for (int i = 0; i < instances; ++i) {
    auto cfg = verify_scenario(seed, 64, 0.05);
    const auto data = so::detail::make_replicate_data(design, cfg, i);
    const auto beta_hat = so::ols_orthogonal(data.data);
    const auto crit = so::Criterion::mbic(63, 1.0, true);
    const auto sel = so::select_nested(crit, data.data);
    const double cutoff = std::log(64.0) + 2.0 * std::log(63.0) + crit.constant;
    for (int j = 1; j < 64; ++j) {
      const double stat = 64.0 * beta_hat[j] * beta_hat[j];
      const bool fixed_rule = stat > cutoff;
      if (fixed_rule != static_cast<bool>(sel.included[j - 1])) {
        ++mismatches;
        break;
      }
    }
  }
  rep.check(mismatches == 0, "known-sigma mBIC selection equals fixed thresholding",
            "mismatching instances=" + std::to_string(mismatches));

  const auto small = so::OrthogonalDesign::hadamard(16);
  int exhaustive_mismatches = 0;
  for (int i = 0; i < std::min(instances, 200); ++i) {
    auto cfg = verify_scenario(seed ^ 0x5eedULL, 16, 0.15);
    const auto data = so::detail::make_replicate_data(small, cfg, i);
    for (auto family :
         {so::CriterionFamily::mbic, so::CriterionFamily::mbic2, so::CriterionFamily::fdr_penalty}) {
      so::Criterion crit;
      crit.family = family;
      crit.k_max = 15;
      if (family == so::CriterionFamily::fdr_penalty) crit.constant = 0.05;
      const auto nested = so::select_nested(crit, data.data);
      const auto exact = so::select_exhaustive(crit, data.data);
      if (nested.included != exact.included) ++exhaustive_mismatches;
    }
  }
  rep.check(exhaustive_mismatches == 0, "nested path minimum equals exhaustive search (m=16)",
            "mismatches=" + std::to_string(exhaustive_mismatches));
  return rep.failures == 0 ? kExitOk : kExitVerify;
}

int verify_asymptotics(std::uint64_t) {
  CheckReporter rep;

  {
    // cutoff concentration: sqrt(n) exp(-n a^2 / (2 sigma^2)) f delta against
    // sqrt(2 pi) sigma rho(0-) approaches 1
    const long n = 100000;
    const so::TwoGroupsModel model(1.0 / static_cast<double>(n), 1.0, n,
                                   so::EffectPrior::normal(0.9));
    const auto thr = so::oracle_thresholds_exact(model);
    const double rho = model.prior.density_at_zero().first;
    const double ratio = std::sqrt(static_cast<double>(n)) *
                         std::exp(-static_cast<double>(n) * thr.a * thr.a / 2.0) * model.f() *
                         model.delta() / (so::kSqrt2Pi * model.sigma * rho);
    rep.check(ratio > 0.95 && ratio < 1.05, "classifier cutoff concentration ratio at n=1e5",
              "ratio=" + std::to_string(ratio));
  }

  {
    // bfdr threshold: exact-vs-leading-order relative gap shrinks along
    // n in {1e3, 1e4, 1e5} with p = 1/n, alpha = n^(-1/2)
    std::vector<double> gaps;
    for (long n : {1000L, 10000L, 100000L}) {
      const so::TwoGroupsModel model(1.0 / static_cast<double>(n), 1.0, n,
                                     so::EffectPrior::normal(0.9));
      const double alpha = 1.0 / std::sqrt(static_cast<double>(n));
      const auto params = so::AsymptoticParams::from_model(model, 0.0);
      const double exact = so::bfdr_threshold(model, alpha);
      const double asym = so::bfdr_threshold_asymptotic(model, params, alpha, 0.0);
      gaps.push_back(std::fabs(exact - asym) / exact);
    }
    const bool decreasing = gaps[0] > gaps[1] && gaps[1] > gaps[2];
    rep.check(decreasing && gaps[2] < 0.05, "bfdr threshold gap decreasing, < 0.05 at n=1e5",
              "gaps=" + std::to_string(gaps[0]) + "," + std::to_string(gaps[1]) + "," +
                  std::to_string(gaps[2]));
  }

  {
    // exact classifier cutoffs approach the leading-order cutoffs
    std::vector<double> gaps;
    for (long n : {100L, 1000L, 10000L, 100000L}) {
      const so::TwoGroupsModel model(1.0 / static_cast<double>(n), 1.0, n,
                                     so::EffectPrior::normal(0.9));
      const auto exact = so::oracle_thresholds_exact(model);
      const auto params = so::AsymptoticParams::from_model(model, 0.0);
      const auto asym = so::oracle_thresholds_asymptotic(model, params);
      gaps.push_back(std::fabs(exact.a - asym.a) / std::fabs(exact.a));
    }
    bool decreasing = true;
    for (std::size_t i = 1; i < gaps.size(); ++i) decreasing = decreasing && gaps[i] < gaps[i - 1];
    rep.check(decreasing, "classifier cutoff gap strictly decreasing in n",
              "gaps=" + std::to_string(gaps[0]) + ".." + std::to_string(gaps.back()));
  }

  return rep.failures == 0 ? kExitOk : kExitVerify;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"asymptotically optimal multiple testing and sparse selection toolkit"};
  app.require_subcommand(1);

  ThresholdArgs thr_args;
  auto* thr = app.add_subcommand("threshold", "compute rule thresholds for a two-groups model");
  thr->add_option("--rule", thr_args.rule, "oracle|bfdr|gw|bonferroni")->required();
  thr->add_option("--p", thr_args.p, "fraction of true signals");
  thr->add_option("--sigma", thr_args.sigma, "noise standard deviation");
  thr->add_option("--n", thr_args.n, "sample size per test");
  thr->add_option("--tau2", thr_args.tau2, "normal effect-prior variance");
  thr->add_option("--prior", thr_args.prior_file, "prior description file (key=value)");
  thr->add_option("--delta0", thr_args.delta0, "loss of a false positive");
  thr->add_option("--deltaA", thr_args.deltaA, "loss of a false negative");
  thr->add_option("--alpha", thr_args.alpha, "level for bfdr/gw/bonferroni");
  thr->add_option("--alpha-inf", thr_args.alpha_inf, "limit level for the asymptotic bfdr formula");
  thr->add_option("--m", thr_args.m, "number of tests (bonferroni)");

  SimulateArgs sim_args;
  auto* sim = app.add_subcommand("simulate", "run a Monte-Carlo sweep and emit CSV");
  sim->add_option("--config", sim_args.config_path, "key=value run configuration file");
  sim->add_option("--out", sim_args.out_path, "output CSV path (default: stdout)");
  std::string sweep_flag, sigma_mode_flag, methods_flag;
  std::uint64_t seed_flag = 0;
  int replicates_flag = 0, m_flag = 0;
  double p_flag = 0.0, alpha_flag = 0.0;
  auto* f_sweep = sim->add_option("--sweep", sweep_flag, "part1|part2|single");
  auto* f_seed = sim->add_option("--seed", seed_flag, "root seed");
  auto* f_reps = sim->add_option("--replicates", replicates_flag, "replicates per scenario");
  auto* f_m = sim->add_option("--m", m_flag, "m_total (power of two)");
  auto* f_p = sim->add_option("--p", p_flag, "sparsity fraction");
  auto* f_alpha = sim->add_option("--alpha", alpha_flag, "FDR/FWER level");
  auto* f_mode = sim->add_option("--sigma-mode", sigma_mode_flag, "known|unknown|both");
  auto* f_methods = sim->add_option("--methods", methods_flag, "comma list of methods");

  std::string suite;
  int instances = 10000;
  std::uint64_t verify_seed = 987654321;
  auto* ver = app.add_subcommand("verify", "run a named invariant suite");
  ver->add_option("--suite", suite, "asymptotics|nesting|oracle-equivalence")
      ->required()
      ->check(CLI::IsMember({"asymptotics", "nesting", "oracle-equivalence"}));
  ver->add_option("--instances", instances, "instance count for sampled suites");
  ver->add_option("--seed", verify_seed, "seed for sampled suites");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (thr->parsed()) return cmd_threshold(thr_args);
    if (sim->parsed()) {
      if (*f_sweep) sim_args.sweep = sweep_flag;
      if (*f_seed) sim_args.seed = seed_flag;
      if (*f_reps) sim_args.replicates = replicates_flag;
      if (*f_m) sim_args.m_total = m_flag;
      if (*f_p) sim_args.p = p_flag;
      if (*f_alpha) sim_args.alpha = alpha_flag;
      if (*f_mode) sim_args.sigma_mode = sigma_mode_flag;
      if (*f_methods) sim_args.methods = methods_flag;
      return cmd_simulate(sim_args);
    }
    if (ver->parsed()) {
      if (suite == "nesting") return verify_nesting(instances, verify_seed);
      if (suite == "oracle-equivalence") return verify_oracle_equivalence(instances, verify_seed);
      if (suite == "asymptotics") return verify_asymptotics(verify_seed);
      throw so::config_error("unknown suite '" + suite +
                             "' (expected asymptotics|nesting|oracle-equivalence)");
    }
  } catch (const so::config_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  } catch (const so::numeric_domain_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitNumeric;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return kExitUsage;
}
