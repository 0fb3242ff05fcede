#include <catch2/catch.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "sparse_oracle/regression.hpp"
#include "sparse_oracle/rng.hpp"

using namespace sparse_oracle;

namespace {

RegressionData noisy_data(const OrthogonalDesign& design, SplitRng& rng, double signal_frac,
                          double tau = 0.95, double sigma = 1.0) {
  std::vector<double> beta(design.m_total(), 0.0);
  for (int j = 1; j < design.m_total(); ++j) {
    if (rng.uniform() < signal_frac) beta[j] = tau * rng.normal();
  }
  return make_regression_data(design, std::move(beta), sigma, rng);
}

// residual sum of squares computed the slow way: explicit projection of y on
// the chosen columns (plus intercept) using the stored matrix
double direct_rss(const RegressionData& data, const std::vector<int>& chosen) {
  const auto& d = *data.design;
  const int n = d.n();
  std::vector<double> fitted(n, 0.0);
  std::vector<int> cols = chosen;
  cols.push_back(0);
  for (int c : cols) {
    double dot = 0.0;
    for (int i = 0; i < n; ++i) dot += d.entry(i, c) * data.y[i];
    const double coef = dot / n;
    for (int i = 0; i < n; ++i) fitted[i] += coef * d.entry(i, c);
  }
  double rss = 0.0;
  for (int i = 0; i < n; ++i) {
    const double r = data.y[i] - fitted[i];
    rss += r * r;
  }
  return rss;
}

}  // namespace

TEST_CASE("hadamard construction", "[regression]") {
  const auto h2 = OrthogonalDesign::hadamard(2);
  CHECK(h2.entry(0, 0) == 1);
  CHECK(h2.entry(0, 1) == 1);
  CHECK(h2.entry(1, 0) == 1);
  CHECK(h2.entry(1, 1) == -1);

  CHECK(OrthogonalDesign::hadamard(4).verify_orthogonality());

  const auto h256 = OrthogonalDesign::hadamard(256);
  for (int i = 0; i < 256; ++i) CHECK(h256.entry(i, 0) == 1);
  CHECK(h256.verify_orthogonality());

  CHECK_THROWS_AS(OrthogonalDesign::hadamard(12), config_error);
  CHECK_THROWS_AS(OrthogonalDesign::hadamard(0), config_error);

  CHECK(h2.to_text() == "+1 +1\n+1 -1\n");
}

TEST_CASE("fast transform equals the explicit matrix product", "[regression]") {
  SplitRng rng(21, 0);
  for (int m : {2, 8, 64}) {
    const auto d = OrthogonalDesign::hadamard(m);
    std::vector<double> v(m);
    for (auto& x : v) x = rng.normal();
    std::vector<double> direct(m, 0.0);
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < m; ++j) direct[i] += d.entry(i, j) * v[j];
    }
    auto fast = v;
    d.transform(fast);
    for (int i = 0; i < m; ++i) CHECK(fast[i] == Approx(direct[i]).margin(1e-12));
  }
}

TEST_CASE("least squares under orthogonality", "[regression]") {
  const auto design = OrthogonalDesign::hadamard(16);
  SplitRng rng(22, 0);

  SECTION("noiseless recovery is exact") {
    std::vector<double> beta(16, 0.0);
    beta[3] = 1.25;
    beta[9] = -0.5;
    std::vector<double> y = beta;
    design.transform(y);
    RegressionData data{&design, y, beta, 1.0, 2};
    const auto est = ols_orthogonal(data);
    for (int j = 0; j < 16; ++j) CHECK(est[j] == Approx(beta[j]).margin(1e-13));
  }

  SECTION("constant response loads only the intercept") {
    RegressionData data{&design, std::vector<double>(16, 3.7), std::vector<double>(16, 0.0), 1.0, 0};
    const auto est = ols_orthogonal(data);
    CHECK(est[0] == Approx(3.7).margin(1e-13));
    for (int j = 1; j < 16; ++j) CHECK(est[j] == Approx(0.0).margin(1e-13));
  }

  SECTION("null sampling variance is sigma^2/n") {
    const int reps = 100000;
    double sum = 0.0, sq = 0.0;
    for (int r = 0; r < reps; ++r) {
      auto data = make_regression_data(design, std::vector<double>(16, 0.0), 1.0, rng);
      const auto est = ols_orthogonal(data);
      sum += est[5];
      sq += est[5] * est[5];
    }
    const double var = (sq - sum * sum / reps) / (reps - 1);
    CHECK(var == Approx(1.0 / 16.0).epsilon(0.05));
  }
}

TEST_CASE("criterion values", "[regression]") {
  const int m = 100, n = 256;

  SECTION("empty model pays no penalty") {
    for (auto family : {CriterionFamily::mbic, CriterionFamily::mbic1, CriterionFamily::mbic2,
                        CriterionFamily::mbic3, CriterionFamily::fdr_penalty}) {
      Criterion crit;
      crit.family = family;
      crit.constant = family == CriterionFamily::fdr_penalty ? 0.05 : crit.constant;
      crit.k_max = 10;
      CHECK(criterion_value(crit, 0, 123.0, m, n) == Approx(123.0));
    }
  }

  SECTION("second variant differs from the base by -2 log k!") {
    const auto base = Criterion::mbic(50, 1.0, true, -1.1);
    const auto second = Criterion::mbic2(50, 1.0, true, -1.1);
    for (int k : {1, 2, 5, 17}) {
      const double diff = criterion_value(second, k, 50.0, m, n) -
                          criterion_value(base, k, 50.0, m, n);
      CHECK(diff == Approx(-2.0 * std::lgamma(k + 1.0)).margin(1e-10));
    }
  }

  SECTION("quantile penalty against table values") {
    const auto crit = Criterion::fdr_penalty(50, 0.05);
    const double value = criterion_value(crit, 2, 10.0, 100, n);
    CHECK(value - 10.0 == Approx(22.943231317059908).margin(1e-6));
  }

  SECTION("third variant uses k log k with the k <= 1 convention") {
    const auto crit = Criterion::mbic3(50, 1.0, true, 0.3);
    const double lognm2 = std::log(static_cast<double>(n)) + 2.0 * std::log(static_cast<double>(m));
    CHECK(criterion_value(crit, 1, 10.0, m, n) == Approx(10.0 + lognm2 + 0.3).margin(1e-12));
    CHECK(criterion_value(crit, 3, 10.0, m, n) ==
          Approx(10.0 + 3.0 * (lognm2 + 0.3) - 6.0 * std::log(3.0)).margin(1e-12));
  }

  SECTION("domain errors") {
    Criterion crit = Criterion::mbic1(5);
    CHECK_THROWS_AS(penalty_increment(crit, 1, 1, 2), numeric_domain_error);  // n m^2 = 2 < e

    Criterion unknown = Criterion::mbic(5, 1.0, false);
    CHECK_THROWS_AS(criterion_value(unknown, 1, 0.0, m, n), numeric_domain_error);
    CHECK_THROWS_AS(criterion_value(unknown, 1, -2.0, m, n), numeric_domain_error);
  }
}

TEST_CASE("nested selection equals fixed thresholding for the base criterion", "[regression]") {
  const auto design = OrthogonalDesign::hadamard(64);
  SplitRng rng(23, 0);
  for (int trial = 0; trial < 300; ++trial) {
    const auto data = noisy_data(design, rng, 0.08);
    const auto crit = Criterion::mbic(63);
    const auto sel = select_nested(crit, data);
    const auto beta_hat = ols_orthogonal(data);
    const double cutoff = std::log(64.0) + 2.0 * std::log(63.0) + crit.constant;
    for (int j = 1; j < 64; ++j) {
      const bool fixed_rule = 64.0 * beta_hat[j] * beta_hat[j] > cutoff;
      CHECK(fixed_rule == static_cast<bool>(sel.included[j - 1]));
    }
  }
}

TEST_CASE("nested selection picks the null model for tiny coefficients", "[regression]") {
  const auto design = OrthogonalDesign::hadamard(32);
  SplitRng rng(24, 0);
  auto data = make_regression_data(design, std::vector<double>(32, 0.0), 0.01, rng);
  data.sigma = 1.0;  // criterion believes sigma = 1, so every statistic is tiny
  const auto sel = select_nested(Criterion::mbic(31), data);
  CHECK(sel.k == 0);
}

TEST_CASE("path residuals telescope and match direct projections", "[regression]") {
  const auto design = OrthogonalDesign::hadamard(16);
  SplitRng rng(25, 0);
  for (int trial = 0; trial < 25; ++trial) {
    const auto data = noisy_data(design, rng, 0.3);
    const auto beta_hat = ols_orthogonal(data);
    const auto path = detail::nested_path(data, beta_hat);
    double rss = path.rss0;
    std::vector<int> chosen;
    CHECK(rss == Approx(direct_rss(data, chosen)).epsilon(1e-8));
    for (std::size_t k = 0; k < path.order.size(); ++k) {
      rss -= path.n_beta2[k];
      chosen.push_back(path.order[k]);
      CHECK(rss == Approx(direct_rss(data, chosen)).margin(1e-8));
    }
  }
}

TEST_CASE("nested minimum equals exhaustive search for size-only penalties", "[regression]") {
  SplitRng rng(26, 0);
  for (int m_total : {8, 16}) {
    const auto design = OrthogonalDesign::hadamard(m_total);
    for (int trial = 0; trial < 50; ++trial) {
      const auto data = noisy_data(design, rng, 0.25);
      for (auto family :
           {CriterionFamily::mbic, CriterionFamily::mbic2, CriterionFamily::fdr_penalty}) {
        Criterion crit;
        crit.family = family;
        crit.constant = family == CriterionFamily::fdr_penalty ? 0.05 : kDefaultMbicConstant;
        crit.k_max = m_total - 1;
        const auto nested = select_nested(crit, data);
        const auto exact = select_exhaustive(crit, data);
        CHECK(nested.included == exact.included);
        CHECK(nested.criterion_value == Approx(exact.criterion_value).margin(1e-9));
      }
    }
  }
}

TEST_CASE("best fixed-size subset takes the largest coefficients", "[regression]") {
  // for penalties depending on k alone, only the fit term separates subsets
  // of equal size, so the winner must be the top-k by |beta_hat|
  const auto design = OrthogonalDesign::hadamard(16);
  SplitRng rng(30, 0);
  for (int trial = 0; trial < 20; ++trial) {
    const auto data = noisy_data(design, rng, 0.3);
    const auto beta_hat = ols_orthogonal(data);
    std::vector<int> order(15);
    std::iota(order.begin(), order.end(), 1);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      return beta_hat[a] * beta_hat[a] > beta_hat[b] * beta_hat[b];
    });
    for (int k = 1; k <= 15; ++k) {
      double best_rss = 1e300;
      std::uint32_t best_mask = 0;
      for (std::uint32_t mask = 0; mask < (1u << 15); ++mask) {
        if (__builtin_popcount(mask) != k) continue;
        double explained = 0.0;
        for (int j = 0; j < 15; ++j) {
          if (mask & (1u << j)) explained += 16.0 * beta_hat[j + 1] * beta_hat[j + 1];
        }
        if (-explained < best_rss) {
          best_rss = -explained;
          best_mask = mask;
        }
      }
      std::uint32_t topk_mask = 0;
      for (int i = 0; i < k; ++i) topk_mask |= 1u << (order[i] - 1);
      CHECK(best_mask == topk_mask);
    }
  }
}

TEST_CASE("unknown-sigma search cap is enforced", "[regression]") {
  const auto design = OrthogonalDesign::hadamard(16);
  SplitRng rng(31, 0);
  const auto data = noisy_data(design, rng, 0.2);
  auto crit = Criterion::mbic(15, 1.0, /*sigma_known=*/false);
  CHECK_THROWS_AS(select_nested(crit, data), std::invalid_argument);  // 15 > n - 2
  crit.k_max = 14;
  CHECK_NOTHROW(select_nested(crit, data));
}

TEST_CASE("exhaustive search corner cases", "[regression]") {
  const auto design = OrthogonalDesign::hadamard(8);
  SplitRng rng(27, 0);

  SECTION("k_max = 0 forces the null model") {
    const auto data = noisy_data(design, rng, 0.5);
    const auto sel = select_exhaustive(Criterion::mbic(0), data);
    CHECK(sel.k == 0);
  }

  SECTION("two strong signals in noiseless data are found exactly") {
    std::vector<double> beta(8, 0.0);
    beta[2] = 4.0;
    beta[6] = -5.0;
    std::vector<double> y = beta;
    design.transform(y);
    RegressionData data{&design, y, beta, 1.0, 2};
    const auto sel = select_exhaustive(Criterion::mbic(7), data);
    CHECK(sel.k == 2);
    CHECK(sel.included[1] == 1);
    CHECK(sel.included[5] == 1);
  }

  SECTION("large designs refused") {
    const auto big = OrthogonalDesign::hadamard(32);
    const auto data = noisy_data(big, rng, 0.1);
    CHECK_THROWS_AS(select_exhaustive(Criterion::mbic(5), data), std::invalid_argument);
  }
}

TEST_CASE("known-p selection rule", "[regression]") {
  CHECK(oracle_selection_threshold(256, 0.05, 0.9) == Approx(11.382214253010393).epsilon(1e-12));
  CHECK(oracle_selection_threshold(256, 0.5, 0.9) == Approx(5.4677769285389146).epsilon(1e-12));
  CHECK(oracle_selection_threshold(256, 0.01, 0.9) > oracle_selection_threshold(256, 0.05, 0.9));
  CHECK(oracle_selection_threshold(256, 0.05, 0.9) > oracle_selection_threshold(256, 0.2, 0.9));

  const auto design = OrthogonalDesign::hadamard(16);
  std::vector<double> beta(16, 0.0);
  beta[4] = 3.0;
  std::vector<double> y = beta;
  design.transform(y);
  RegressionData data{&design, y, beta, 1.0, 1};
  const auto sel = oracle_select(data, 0.05, 0.9);
  CHECK(sel.k == 1);
  CHECK(sel.included[3] == 1);
}

TEST_CASE("coefficient-wise simple tests", "[regression]") {
  const auto design = OrthogonalDesign::hadamard(64);

  SECTION("noiseless single signal, known sigma") {
    std::vector<double> beta(64, 0.0);
    beta[10] = 2.0;
    std::vector<double> y = beta;
    design.transform(y);
    RegressionData data{&design, y, beta, 1.0, 1};
    const auto tests = simple_regression_tests(data, true);
    CHECK(tests.pvalues.values[9] < 1e-12);
    for (int j = 0; j < 63; ++j) {
      if (j != 9) CHECK(tests.pvalues.values[j] == Approx(1.0));
    }
  }

  SECTION("unknown sigma flags degenerate single-regressor fits") {
    std::vector<double> beta(64, 0.0);
    beta[10] = 2.0;
    std::vector<double> y = beta;
    design.transform(y);
    RegressionData data{&design, y, beta, 1.0, 1};
    const auto tests = simple_regression_tests(data, false);
    CHECK(tests.degenerate[9] == 1);
    CHECK(tests.pvalues.values[9] == 0.0);
  }

  SECTION("strong companions inflate the simple-fit residual and cost power") {
    SplitRng rng(28, 0);
    double mean_abs_z = 0.0, mean_abs_t = 0.0;
    int signals = 0;
    for (int trial = 0; trial < 40; ++trial) {
      std::vector<double> beta(64, 0.0);
      for (int j = 1; j < 64; ++j) {
        if (rng.uniform() < 0.25) beta[j] = 2.0 + rng.uniform();
      }
      auto data = make_regression_data(design, beta, 1.0, rng);
      const auto z_tests = simple_regression_tests(data, true);
      const auto t_tests = simple_regression_tests(data, false);
      for (int j = 1; j < 64; ++j) {
        if (beta[j] == 0.0) continue;
        ++signals;
        // translate p back to the statistic scale for comparability
        mean_abs_z += -normal_quantile(0.5 * z_tests.pvalues.values[j - 1]);
        mean_abs_t += -normal_quantile(0.5 * std::min(1.0, t_tests.pvalues.values[j - 1]));
      }
    }
    REQUIRE(signals > 0);
    CHECK(mean_abs_t / signals < mean_abs_z / signals);
  }
}

TEST_CASE("penalized selection sits between the step rules", "[regression]") {
  const auto design = OrthogonalDesign::hadamard(64);
  SplitRng rng(29, 0);

  int nonzero_cases = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    const auto data = noisy_data(design, rng, 0.03 + 0.3 * rng.uniform());
    const auto report = fdr_nesting_check(data, 0.05);
    CHECK(report.k_g_minus_1 <= report.k_sel);
    CHECK(report.k_sel <= report.k_f);
    if (report.k_sel > 0) ++nonzero_cases;
  }
  CHECK(nonzero_cases > 0);

  SECTION("saturated signals select everything") {
    std::vector<double> beta(64, 0.0);
    for (int j = 1; j < 64; ++j) beta[j] = 20.0 + j * 0.1;
    auto data = make_regression_data(design, beta, 1.0, rng);
    const auto report = fdr_nesting_check(data, 0.05);
    CHECK(report.k_sel == 63);
    CHECK(report.k_f == 63);
    CHECK(report.k_g_minus_1 == 63);
  }

  SECTION("pure noise usually selects nothing") {
    auto data = make_regression_data(design, std::vector<double>(64, 0.0), 1.0, rng);
    const auto report = fdr_nesting_check(data, 0.05);
    CHECK(report.k_sel <= 1);  // a stray rejection is possible but rare
  }
}
