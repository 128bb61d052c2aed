#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace igb::stats {

double mean(std::span<const double> x);
/// Divide-by-(n-1) variance; n >= 2.
double sample_variance(std::span<const double> x);
double standard_error(std::span<const double> x);
/// Median of a copy; +inf entries are allowed (censored values sort last).
double median(std::vector<double> x);

/// Equal-width bins on [lo, hi]; the value hi falls in the last bin.
struct Histogram {
  std::vector<double> edges;
  std::vector<std::size_t> counts;

  std::size_t total() const;
  /// Fraction of counts in bins lying entirely inside [a, b].
  double mass_between(double a, double b) const;
};

Histogram make_histogram(std::span<const double> x, std::size_t bins = 40, double lo = 0.0,
                         double hi = 1.0);

using Function = std::function<double(double)>;

/// sup |F_n - F| against an analytic CDF. At least 20 samples.
double ks_distance(std::span<const double> samples, const Function& cdf);

/// sup |F_n - F| where F is obtained by integrating `pdf` from `lower`
/// (may be -inf) through the sorted samples.
double ks_distance_pdf(std::span<const double> samples, const Function& pdf, double lower);

/// Two-sample statistic sup |F_n - G_m|. At least 20 samples each.
double ks_two_sample(std::span<const double> a, std::span<const double> b);

/// Leave-one-out jackknife standard error of `statistic` over n groups.
/// `statistic(skip)` must return the estimate without group `skip`.
double jackknife_se(std::size_t n, const std::function<double(std::size_t skip)>& statistic);

}  // namespace igb::stats
