#pragma once

// Small statistics helpers used by the experiment harness.

#include <span>
#include <vector>

namespace ctmc {

struct SignTest {
  int less = 0;     // pairs with a < b
  int greater = 0;  // pairs with a > b
  int ties = 0;
  /// P(at least `less` successes) under Binomial(less + greater, 1/2).
  double p_less = 1.0;
  double p_two_sided = 1.0;
};

/// Paired sign test on (a[i], b[i]); ties are dropped.
SignTest sign_test(std::span<const double> a, std::span<const double> b);

struct ChiSquare {
  double statistic = 0.0;
  int dof = 0;
  double p_value = 1.0;
};

/// Goodness of fit of observed counts to probabilities. Cells with expected
/// count below `min_expected` are pooled into one.
ChiSquare chi_square_gof(std::span<const double> counts, std::span<const double> probs, double min_expected = 5.0);

/// Two-sample homogeneity test on two count vectors over the same cells.
ChiSquare chi_square_two_sample(std::span<const double> a, std::span<const double> b, double min_expected = 5.0);

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
};

/// Least squares fit of y = slope * x + intercept.
LineFit fit_line(std::span<const double> x, std::span<const double> y);

double mean(std::span<const double> v);

}  // namespace ctmc
