#pragma once

// Distribution functions needed by the balance test and the reference laws.

namespace pretest::special {

double normal_cdf(double x);

// Inverse standard normal CDF (Wichura, AS 241); relative error ~1e-16.
double normal_quantile(double p);

// Regularized lower incomplete gamma P(s, x).
double gamma_p(double s, double x);
// Regularized upper incomplete gamma Q(s, x) = 1 - P(s, x), computed directly.
double gamma_q(double s, double x);

double chi2_cdf(int dof, double x);
double chi2_quantile(int dof, double p);

}  // namespace pretest::special
