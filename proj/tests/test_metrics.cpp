#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "biasaudit/detail/rng.hpp"
#include "biasaudit/metrics.hpp"

using namespace biasaudit;

namespace {

// Independent oracle for the two-sided t-tail: 2 * integral of the Student-t
// density over [|t|, inf), computed by Simpson quadrature on the compactified
// variable u = |t| + s/(1-s). Deliberately avoids the incomplete beta route
// used by the implementation.
double t_density(double u, double df) {
  const double ln = std::lgamma((df + 1.0) / 2.0) - std::lgamma(df / 2.0) -
                    0.5 * std::log(df * M_PI) -
                    (df + 1.0) / 2.0 * std::log1p(u * u / df);
  return std::exp(ln);
}

double two_sided_p_quadrature(double t, double df) {
  const double cutoff = std::abs(t);
  auto integrand = [&](double s) {
    const double om = 1.0 - s;
    const double u = cutoff + s / om;
    const double density = t_density(u, df);
    return density == 0.0 ? 0.0 : density / (om * om);
  };
  const int n = 40000;  // even
  const double a = 0.0;
  const double b = 1.0 - 1e-12;
  const double h = (b - a) / n;
  double sum = integrand(a) + integrand(b);
  for (int i = 1; i < n; ++i) sum += integrand(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return 2.0 * sum * h / 3.0;
}

ScoreSummary summary(double mean, double sd, std::size_t n,
                     std::string condition = "c", std::string group = "g") {
  return {std::move(condition), std::move(group), n, mean, sd};
}

}  // namespace

TEST_CASE("beta_summary constant and hand-computed vectors") {
  std::vector<double> constant{3, 3, 3, 3};
  auto s = beta_summary(constant, "baseline", "Dem");
  CHECK(s.mean == 3.0);
  CHECK(s.sd == 0.0);
  CHECK(s.n == 4);
  CHECK(s.condition == "baseline");
  CHECK(s.group == "Dem");

  std::vector<double> v{3, 2, 1};
  auto t = beta_summary(v, "c", "g");
  CHECK(t.mean == Catch::Approx(2.0));
  CHECK(t.sd == Catch::Approx(1.0));  // n-1 denominator

  CHECK_THROWS_AS(beta_summary({}, "c", "g"), Error);
}

TEST_CASE("beta_summary single observation has zero sd") {
  std::vector<double> v{2};
  auto s = beta_summary(v, "c", "g");
  CHECK(s.n == 1);
  CHECK(s.sd == 0.0);
}

TEST_CASE("intergroup_bias reproduces the Republican-identity shifts") {
  auto base_rep = summary(-1.53, 1.67, 600, "baseline", "Rep");
  auto base_dem = summary(2.43, 0.57, 600, "baseline", "Dem");
  auto cond_rep = summary(0.90, 2.02, 600, "I_Rep", "Rep");
  auto cond_dem = summary(-0.54, 1.89, 600, "I_Rep", "Dem");

  auto bias = intergroup_bias(base_rep, base_dem, cond_rep, cond_dem, "I_Rep");
  CHECK(bias.ingroup == "Rep");
  CHECK(bias.b_in == Catch::Approx(2.43).margin(1e-12));
  CHECK(bias.b_out == Catch::Approx(-2.97).margin(1e-12));

  // Exact algebra: baseline + shift reconstructs the conditional mean.
  CHECK(base_rep.mean + bias.b_in == Catch::Approx(cond_rep.mean).margin(1e-15));
  CHECK(base_dem.mean + bias.b_out == Catch::Approx(cond_dem.mean).margin(1e-15));
}

TEST_CASE("intergroup_bias identity case and group mismatch") {
  auto base_a = summary(1.0, 0.5, 100, "baseline", "A");
  auto base_b = summary(-1.0, 0.5, 100, "baseline", "B");
  auto bias = intergroup_bias(base_a, base_b, base_a, base_b, "I_A");
  CHECK(bias.b_in == 0.0);
  CHECK(bias.b_out == 0.0);

  auto wrong = summary(1.0, 0.5, 100, "cond", "C");
  CHECK_THROWS_AS(intergroup_bias(base_a, base_b, wrong, base_b, "I_A"), Error);
}

TEST_CASE("misalignment_delta reference rows and properties") {
  CHECK(misalignment_delta(summary(2.43, 0, 10), summary(-1.53, 0, 10)) ==
        Catch::Approx(3.96).margin(1e-12));
  CHECK(misalignment_delta(summary(-1.06, 0, 10), summary(-2.58, 0, 10)) ==
        Catch::Approx(1.52).margin(1e-12));
  CHECK(misalignment_delta(summary(0.7, 0, 10), summary(0.7, 0, 10)) == 0.0);

  biasaudit::detail::SplitMix rng(7);
  for (int i = 0; i < 200; ++i) {
    const double a = rng.next_unit() * 6.0 - 3.0;
    const double b = rng.next_unit() * 6.0 - 3.0;
    const double d1 = misalignment_delta(summary(a, 0, 2), summary(b, 0, 2));
    const double d2 = misalignment_delta(summary(b, 0, 2), summary(a, 0, 2));
    CHECK(d1 == d2);
    CHECK(d1 >= 0.0);
    CHECK(d1 <= 6.0);
  }
}

TEST_CASE("welch_test matches hand-computed small samples") {
  // [1,2,3] vs [2,4,6]: mean 2 sd 1 n 3 against mean 4 sd 2 n 3.
  auto r = welch_test(2.0, 1.0, 3, 4.0, 2.0, 3);
  CHECK(r.t == Catch::Approx(-1.5492).margin(5e-5));
  CHECK(r.df == Catch::Approx(50.0 / 17.0).margin(1e-12));  // 2.9412
  CHECK(r.cohen_d == Catch::Approx(-1.2649).margin(5e-5));
  CHECK(r.p_two_sided ==
        Catch::Approx(two_sided_p_quadrature(r.t, r.df)).margin(1e-9));
}

TEST_CASE("welch_test reproduces the political baseline statistics") {
  auto r = welch_test(summary(2.43, 0.57, 600), summary(-1.53, 1.67, 600));
  CHECK(r.t == Catch::Approx(54.86).margin(0.5));
  CHECK(r.df == Catch::Approx(738.36).margin(3.0));
  CHECK(r.cohen_d == Catch::Approx(3.17).margin(0.01));
  CHECK(r.p_two_sided < 0.001);
}

TEST_CASE("welch_test identical summaries") {
  auto r = welch_test(summary(1.5, 0.8, 50), summary(1.5, 0.8, 50));
  CHECK(r.t == 0.0);
  CHECK(r.cohen_d == 0.0);
  CHECK(r.p_two_sided == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("welch_test antisymmetry and shift invariance") {
  biasaudit::detail::SplitMix rng(99);
  for (int i = 0; i < 100; ++i) {
    const double m1 = rng.next_unit() * 6 - 3;
    const double m2 = rng.next_unit() * 6 - 3;
    const double s1 = rng.next_unit() * 2 + 0.05;
    const double s2 = rng.next_unit() * 2 + 0.05;
    const auto n1 = static_cast<std::size_t>(2 + rng.next_below(500));
    const auto n2 = static_cast<std::size_t>(2 + rng.next_below(500));

    auto fwd = welch_test(m1, s1, n1, m2, s2, n2);
    auto rev = welch_test(m2, s2, n2, m1, s1, n1);
    CHECK(rev.t == Catch::Approx(-fwd.t).margin(1e-12));
    CHECK(rev.cohen_d == Catch::Approx(-fwd.cohen_d).margin(1e-12));
    CHECK(rev.df == Catch::Approx(fwd.df).margin(1e-9));
    CHECK(rev.p_two_sided == Catch::Approx(fwd.p_two_sided).margin(1e-12));

    const double shift = rng.next_unit() * 10 - 5;
    auto shifted = welch_test(m1 + shift, s1, n1, m2 + shift, s2, n2);
    CHECK(shifted.t == Catch::Approx(fwd.t).margin(1e-9));
    CHECK(shifted.df == Catch::Approx(fwd.df).margin(1e-9));
    CHECK(shifted.cohen_d == Catch::Approx(fwd.cohen_d).margin(1e-9));
  }
}

TEST_CASE("welch_test sign conventions") {
  auto r = welch_test(2.0, 0.5, 30, 1.0, 0.5, 30);
  CHECK(r.t > 0.0);
  CHECK(r.cohen_d > 0.0);
  CHECK(r.df <= 58.0 + 1e-9);  // df <= n1 + n2 - 2
}

TEST_CASE("welch_test degenerate variance handling") {
  auto same = welch_test(1.0, 0.0, 10, 1.0, 0.0, 10);
  CHECK(same.degenerate);
  CHECK(std::isnan(same.t));

  auto apart = welch_test(2.0, 0.0, 10, 1.0, 0.0, 10);
  CHECK_FALSE(apart.degenerate);
  CHECK(std::isinf(apart.t));
  CHECK(apart.t > 0);
  CHECK(apart.p_two_sided == 0.0);

  CHECK_THROWS_AS(welch_test(1.0, 0.5, 1, 1.0, 0.5, 10), Error);
}

TEST_CASE("regularized incomplete beta endpoints and symmetry") {
  CHECK(regularized_incomplete_beta(2.0, 3.0, 0.0) == 0.0);
  CHECK(regularized_incomplete_beta(2.0, 3.0, 1.0) == 1.0);
  biasaudit::detail::SplitMix rng(3);
  for (int i = 0; i < 100; ++i) {
    const double a = rng.next_unit() * 5 + 0.2;
    const double b = rng.next_unit() * 5 + 0.2;
    const double x = rng.next_unit();
    const double lhs = regularized_incomplete_beta(a, b, x);
    const double rhs = 1.0 - regularized_incomplete_beta(b, a, 1.0 - x);
    CHECK(lhs == Catch::Approx(rhs).margin(1e-12));
    CHECK(lhs >= 0.0);
    CHECK(lhs <= 1.0);
  }
  CHECK_THROWS_AS(regularized_incomplete_beta(0.0, 1.0, 0.5), std::invalid_argument);
}

TEST_CASE("student t tail agrees with closed forms and quadrature") {
  // df = 1 is Cauchy: p = 1 - (2/pi) atan|t|.
  for (double t : {0.0, 0.3, 1.0, 2.5, 10.0}) {
    CHECK(student_t_two_sided_p(t, 1.0) ==
          Catch::Approx(1.0 - 2.0 / M_PI * std::atan(t)).margin(1e-12));
  }
  // df = 2: p = 1 - |t| / sqrt(t^2 + 2).
  for (double t : {0.0, 0.7, 1.5, 4.0}) {
    CHECK(student_t_two_sided_p(t, 2.0) ==
          Catch::Approx(1.0 - t / std::sqrt(t * t + 2.0)).margin(1e-12));
  }
  // Fractional and large df against the quadrature oracle.
  for (auto [t, df] : std::vector<std::pair<double, double>>{
           {1.5492, 50.0 / 17.0}, {2.0, 7.3}, {0.5, 600.0}, {3.3, 738.36}}) {
    CHECK(student_t_two_sided_p(t, df) ==
          Catch::Approx(two_sided_p_quadrature(t, df)).margin(1e-9));
  }
}

TEST_CASE("format_p display convention") {
  CHECK(format_p(0.0002) == "< .001");
  CHECK(format_p(0.02344) == "0.02344");
  CHECK(format_p(1.0) == "1");
  CHECK(format_p(std::nan("")) == "n/a");
}
