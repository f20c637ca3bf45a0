#pragma once

namespace markovlens::stats {

// Regularized incomplete beta I_x(a, b), a, b > 0, x in [0, 1].
double incomplete_beta(double a, double b, double x);

// Regularized incomplete gamma functions P(a, x) and Q(a, x) = 1 - P(a, x).
double gamma_p(double a, double x);
double gamma_q(double a, double x);

// Upper tail P(T > t) of Student's t with `df` degrees of freedom.
double student_t_sf(double t, double df);

// Two-sided p-value P(|T| >= |t|).
double student_t_two_sided(double t, double df);

// Quantile of Student's t (inverse CDF) for p in (0, 1).
double student_t_quantile(double p, double df);

// Upper tail of the chi-square distribution with k degrees of freedom.
double chi_square_sf(double x, double k);

}  // namespace markovlens::stats
