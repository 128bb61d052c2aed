#pragma once

namespace igb::special {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kSqrt2 = 1.41421356237309504880;
inline constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double erf(double x);
double erfc(double x);

double std_normal_pdf(double x);
/// Phi(x), accurate in both tails.
double std_normal_cdf(double x);
/// Phi^{-1}(p) for p in (0, 1); DomainError otherwise. Odd symmetry is exact:
/// quantile(1 - p) == -quantile(p) whenever 1 - (1 - p) == p in floating point.
double std_normal_quantile(double p);

/// log Gamma(x) for x > 0 (Lanczos, g = 7). DomainError for x <= 0.
double log_gamma(double x);
/// Gamma(a) / Gamma(b) evaluated in log space.
double gamma_ratio(double a, double b);

}  // namespace igb::special
