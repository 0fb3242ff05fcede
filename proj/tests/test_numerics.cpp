#include <catch2/catch.hpp>

#include <cmath>
#include <cstring>
#include <functional>
#include <limits>
#include <utility>
#include <vector>

#include "sparse_oracle/numerics.hpp"
#include "sparse_oracle/rng.hpp"

using namespace sparse_oracle;

TEST_CASE("normal cdf center, symmetry and tails", "[numerics]") {
  CHECK(normal_cdf(0.0) == 0.5);
  CHECK(normal_cdf(1.959964) == Approx(0.9750000009035576).epsilon(1e-9));

  // reference tail values (high-precision erfc)
  CHECK(normal_sf(1.0) == Approx(0.15865525393145705).epsilon(1e-14));
  CHECK(normal_sf(2.0) == Approx(0.022750131948179207).epsilon(1e-14));
  CHECK(normal_sf(5.0) == Approx(2.8665157187919391e-7).epsilon(1e-13));
  CHECK(normal_sf(8.0) == Approx(6.2209605742717841e-16).epsilon(1e-13));
  CHECK(normal_sf(10.0) == Approx(7.6198530241605261e-24).epsilon(1e-12));
  CHECK(normal_sf(20.0) == Approx(2.7536241186062337e-89).epsilon(1e-12));
  CHECK(normal_sf(30.0) == Approx(4.9067139271481871e-198).epsilon(1e-11));

  // survival stays representable (no underflow to zero) out to |x| = 37
  CHECK(normal_sf(37.0) > 0.0);
  CHECK(normal_sf(37.0) == Approx(5.7255712225245768e-300).epsilon(1e-10));

  // log-space tail keeps Phi(40) strictly below 1
  CHECK(log_normal_sf(40.0) == Approx(-804.60844201375379).epsilon(1e-12));
  CHECK(std::isfinite(log_normal_sf(200.0)));

  for (double x = 0.0; x <= 8.0; x += 0.37) {
    CHECK(normal_cdf(-x) + normal_cdf(x) == Approx(1.0).epsilon(1e-14));
  }

  double prev = -1.0;
  for (double x = -12.0; x <= 12.0; x += 0.11) {
    const double c = normal_cdf(x);
    CHECK(c >= prev);
    prev = c;
  }

  CHECK_THROWS_AS(normal_cdf(std::numeric_limits<double>::quiet_NaN()), std::invalid_argument);
  CHECK_THROWS_AS(normal_cdf(std::numeric_limits<double>::infinity()), std::invalid_argument);
}

TEST_CASE("normal quantile inverts the cdf", "[numerics]") {
  CHECK(normal_quantile(0.5) == 0.0);
  CHECK(normal_quantile(0.975) == Approx(1.9599639845400542).epsilon(1e-6));

  for (double q : {1e-12, 1e-9, 1e-5, 0.01, 0.2, 0.5, 0.77, 0.99, 1 - 1e-6, 1 - 1e-10}) {
    CHECK(normal_cdf(normal_quantile(q)) == Approx(q).margin(1e-12));
  }

  // symmetry: exact to 1e-12 where 1 - q is exactly representable; in the far
  // tails the rounding of 1 - q itself moves the quantile by ~eps/pdf(x)
  for (double q : {0.01, 0.1, 0.25, 0.4, 0.5}) {
    CHECK(normal_quantile(q) + normal_quantile(1.0 - q) == Approx(0.0).margin(1e-12));
  }
  for (double q : {1e-12, 1e-8, 1e-5}) {
    const double x = normal_quantile(q);
    const double representation_slack =
        std::numeric_limits<double>::epsilon() / normal_pdf(x) + 1e-12;
    CHECK(normal_quantile(q) + normal_quantile(1.0 - q) ==
          Approx(0.0).margin(representation_slack));
  }

  // stays finite down into the subnormal range, where the density underflows
  // before the tail probability does
  CHECK(normal_quantile(1e-310) == Approx(-37.6630603319).margin(1e-6));
  CHECK(normal_quantile(5e-324) == Approx(-38.4670954403).margin(1e-6));

  CHECK_THROWS_AS(normal_quantile(0.0), std::invalid_argument);
  CHECK_THROWS_AS(normal_quantile(1.0), std::invalid_argument);
  CHECK_THROWS_AS(normal_quantile(-0.3), std::invalid_argument);
}

TEST_CASE("quadrature on gaussian payloads", "[numerics]") {
  QuadratureSpec spec;

  SECTION("pdf normalizes") {
    spec.truncation_radius = 10.0;
    const double mass = integrate([](double x) { return normal_pdf(x); }, spec, 0.0, 1.0);
    CHECK(mass == Approx(1.0).margin(1e-12));
  }

  SECTION("odd integrand cancels") {
    const double v =
        integrate([](double x) { return x * std::exp(-0.5 * x * x); }, spec, 0.0, 1.0);
    CHECK(v == Approx(0.0).margin(1e-12));
  }

  SECTION("second moment against a blind Riemann sum") {
    auto f = [](double x) { return normal_pdf(x) * x * x; };
    // midpoint oracle, no shared code with the adaptive engine
    const double lo = -12.0, hi = 12.0;
    const long cells = 2'000'000;
    const double h = (hi - lo) / cells;
    double riemann = 0.0;
    for (long i = 0; i < cells; ++i) riemann += f(lo + (i + 0.5) * h);
    riemann *= h;
    const double adaptive = integrate(f, spec, 0.0, 1.0);
    CHECK(adaptive == Approx(riemann).margin(1e-8));
    CHECK(adaptive == Approx(1.0).margin(1e-12));
  }

  SECTION("linearity on random smooth pairs") {
    SplitRng rng(123, 0);
    for (int trial = 0; trial < 20; ++trial) {
      const double w1 = 0.3 + rng.uniform();
      const double w2 = 0.3 + rng.uniform();
      const double alpha = 4.0 * rng.uniform() - 2.0;
      const double beta = 4.0 * rng.uniform() - 2.0;
      auto f = [&](double x) { return std::exp(-0.5 * x * x / (w1 * w1)); };
      auto g = [&](double x) { return std::cos(1.7 * x) * std::exp(-0.5 * x * x / (w2 * w2)); };
      auto combo = [&](double x) { return alpha * f(x) + beta * g(x); };
      const double lhs = integrate(combo, spec, 0.0, 1.0);
      const double rhs = alpha * integrate(f, spec, 0.0, 1.0) + beta * integrate(g, spec, 0.0, 1.0);
      CHECK(lhs == Approx(rhs).margin(2.0 * spec.abs_tol));
    }
  }

  SECTION("deterministic") {
    auto f = [](double x) { return std::exp(-0.4 * x * x) * std::sin(3.0 * x + 0.2); };
    const double a = integrate(f, spec, 0.1, 0.9);
    const double b = integrate(f, spec, 0.1, 0.9);
    CHECK(std::memcmp(&a, &b, sizeof a) == 0);
  }

  SECTION("panel exhaustion throws with a usable estimate") {
    QuadratureSpec tight;
    tight.abs_tol = 1e-15;
    tight.max_panels = 4;
    auto rough = [](double x) { return std::sin(4000.0 * x) + 0.5; };
    try {
      integrate(rough, tight, 0.0, 1.0);
      FAIL("expected quadrature_error");
    } catch (const quadrature_error& e) {
      CHECK(std::isfinite(e.best_estimate()));
      CHECK(e.error_bound() > 0.0);
    }
  }

  SECTION("invalid spec rejected") {
    QuadratureSpec bad;
    bad.abs_tol = 0.0;
    CHECK_THROWS_AS(integrate([](double) { return 1.0; }, bad, 0.0, 1.0), std::invalid_argument);
  }
}

TEST_CASE("bracketed root finding", "[numerics]") {
  RootSpec spec;

  SECTION("identity") {
    const double r = find_root([](double x) { return x; }, -1.0, 1.0, spec);
    CHECK(r == Approx(0.0).margin(1e-12));
  }

  SECTION("normal quantile via cdf root") {
    auto f = [](double x) { return normal_cdf(x) - 0.975; };
    const double r = find_root(f, 0.0, 4.0, spec);
    CHECK(r == Approx(1.9599639845400542).epsilon(1e-6));
    CHECK(std::fabs(f(r)) <= spec.f_tol);
  }

  SECTION("no sign change is an error") {
    CHECK_THROWS_AS(find_root([](double x) { return x * x + 1.0; }, -1.0, 1.0, spec),
                    bracketing_error);
  }

  SECTION("posterior contract on awkward shapes") {
    std::vector<std::pair<std::function<double(double)>, std::pair<double, double>>> cases{
        {[](double x) { return std::tanh(50.0 * (x - 0.31)); }, {-1.0, 1.0}},
        {[](double x) { return x * x * x - 2e-7; }, {-1.0, 1.0}},
        {[](double x) { return std::exp(x) - 3.0; }, {0.0, 4.0}},
    };
    for (auto& [f, bracket] : cases) {
      const double r = find_root(f, bracket.first, bracket.second, spec);
      CHECK(std::fabs(f(r)) <= 1e-6);  // loose residual; contract also allows the x_tol stop
    }
  }
}

TEST_CASE("student t cdf via incomplete beta", "[numerics]") {
  // closed forms: df=1 is Cauchy, df=2 has an algebraic cdf
  CHECK(student_t_cdf(0.0, 5.0) == 0.5);
  CHECK(student_t_cdf(1.3, 1.0) == Approx(0.5 + std::atan(1.3) / kPi).epsilon(1e-12));
  CHECK(student_t_cdf(1.3, 2.0) == Approx(0.83837648409197981).epsilon(1e-12));
  CHECK(student_t_cdf(-1.3, 2.0) == Approx(1.0 - 0.83837648409197981).epsilon(1e-12));

  for (double t = -4.0; t <= 4.0; t += 0.5) {
    CHECK(student_t_cdf(t, 100000.0) == Approx(normal_cdf(t)).margin(1e-3));
  }

  // two-sided tail consistency
  for (double t : {0.3, 1.1, 2.7}) {
    const double df = 14.0;
    CHECK(student_t_two_sided_p(t, df) ==
          Approx(2.0 * (1.0 - student_t_cdf(t, df))).epsilon(1e-10));
  }
}
