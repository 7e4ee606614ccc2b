// Copyright 2026 The trajlab Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "trajlab/error.hpp"
#include "trajlab/stats.hpp"

using namespace trajlab;

// Reference values below were computed with scipy.special.betainc,
// scipy.stats.t.sf and scipy.stats.linregress.

TEST_CASE("incomplete beta matches reference values") {
  struct Case {
    double a, b, x, expected;
  };
  const Case cases[] = {
      {2, 3, 0.5, 0.6875},
      {0.5, 0.5, 0.3, 0.36901011956554536},
      {10, 1.5, 0.9, 0.5401970065018546},
      {50, 0.5, 0.99, 0.3173043978741973},
      {1, 1, 0.25, 0.25},
  };
  for (const auto& c : cases) {
    CAPTURE(c.a);
    CAPTURE(c.x);
    CHECK(stats::regularized_incomplete_beta(c.a, c.b, c.x) == doctest::Approx(c.expected).epsilon(1e-13));
  }
  CHECK(stats::regularized_incomplete_beta(3, 4, 0.0) == 0.0);
  CHECK(stats::regularized_incomplete_beta(3, 4, 1.0) == 1.0);
}

TEST_CASE("incomplete beta rejects bad arguments") {
  CHECK_THROWS_AS(stats::regularized_incomplete_beta(0, 1, 0.5), Error);
  CHECK_THROWS_AS(stats::regularized_incomplete_beta(1, 1, 1.5), Error);
}

TEST_CASE("two-sided t tail matches reference values") {
  CHECK(stats::student_t_two_sided_p(2.0, 5) == doctest::Approx(0.10193947882985828).epsilon(1e-12));
  CHECK(stats::student_t_two_sided_p(0.5, 1) == doctest::Approx(0.7048327646991336).epsilon(1e-12));
  CHECK(stats::student_t_two_sided_p(10, 3) == doctest::Approx(0.0021283990584141494).epsilon(1e-12));
  CHECK(stats::student_t_two_sided_p(-3.2, 30) == doctest::Approx(0.0032386017119531373).epsilon(1e-12));
  CHECK(stats::student_t_two_sided_p(1e-3, 7) == doctest::Approx(0.9992300172449988).epsilon(1e-12));
  CHECK(stats::student_t_two_sided_p(0.0, 4) == 1.0);
}

TEST_CASE("t tail agrees with numeric integration of the density") {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> tdist(-8, 8);
  for (int i = 0; i < 200; ++i) {
    const double t = tdist(gen);
    const double df = static_cast<double>(1 + gen() % 40);
    CAPTURE(t);
    CAPTURE(df);
    CHECK(std::fabs(stats::student_t_two_sided_p(t, df) - oracle::t_two_sided(t, df)) < 1e-10);
  }
}

TEST_CASE("fit_line reproduces linregress") {
  const std::vector<double> y{2.0, 2.2, 1.9, 2.1, 2.0, 2.3, 1.8, 2.2};
  const auto f = stats::fit_line(y);
  CHECK(f.alpha == doctest::Approx(2.0416666666666665).epsilon(1e-13));
  CHECK(f.beta == doctest::Approx(0.005952380952380955).epsilon(1e-12));
  CHECK(f.p_value == doctest::Approx(0.8385660976922534).epsilon(1e-12));

  const std::vector<double> z{3.1, 2.9, 2.5, 2.6, 2.2, 2.0};
  const auto g = stats::fit_line(z);
  CHECK(g.alpha == doctest::Approx(3.0857142857142863).epsilon(1e-13));
  CHECK(g.beta == doctest::Approx(-0.2142857142857143).epsilon(1e-13));
  CHECK(g.p_value == doctest::Approx(0.0013849379404234955).epsilon(1e-10));
}

TEST_CASE("fit_line perfect-fit convention") {
  const std::vector<double> line{1, 2, 3, 4, 5};
  const auto f = stats::fit_line(line);
  CHECK(f.beta == 1.0);
  CHECK(f.p_value == 0.0);
  const std::vector<double> flat{5, 5, 5, 5};
  const auto g = stats::fit_line(flat);
  CHECK(g.beta == 0.0);
  CHECK(g.p_value == 1.0);
}

TEST_CASE("fit_line needs three points") {
  const std::vector<double> two{1, 2};
  try {
    stats::fit_line(two);
    FAIL("expected WindowTooShort");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::WindowTooShort);
  }
}

TEST_CASE("mean and median") {
  const std::vector<double> odd{3, 1, 2};
  const std::vector<double> even{4, 1, 3, 2};
  CHECK(stats::mean(odd) == 2.0);
  CHECK(stats::median(odd) == 2.0);
  CHECK(stats::median(even) == 2.5);
}
