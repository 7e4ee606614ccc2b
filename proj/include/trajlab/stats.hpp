// Copyright 2026 The trajlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>

namespace trajlab::stats {

/// I_x(a, b), the regularized incomplete beta function, for a, b > 0 and
/// x in [0, 1]. Continued fraction (modified Lentz), relative accuracy ~1e-15.
double regularized_incomplete_beta(double a, double b, double x);

/// Two-sided tail probability P(|T| >= |t|) for Student's t with `df` degrees
/// of freedom: I_{df/(df+t^2)}(df/2, 1/2).
double student_t_two_sided_p(double t, double df);

struct LineFit {
  double alpha = 0.0;  // intercept
  double beta = 0.0;   // slope
  double p_value = 1.0;
  double residual_ss = 0.0;
};

/// Ordinary least squares of y on x = 0, 1, ..., n-1 with a two-sided t test
/// on the slope (df = n - 2). Needs n >= 3. A zero residual sum of squares
/// gives p = 0 for a nonzero slope and p = 1 for a zero slope.
LineFit fit_line(std::span<const double> y);

double mean(std::span<const double> xs);
/// Median; the mean of the two middle values for even sizes.
double median(std::span<const double> xs);

}  // namespace trajlab::stats
