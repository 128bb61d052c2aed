#include "igb/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "igb/error.hpp"

namespace igb::stats {

double mean(std::span<const double> x) {
  if (x.empty()) throw DomainError("mean: empty sample");
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

double sample_variance(std::span<const double> x) {
  if (x.size() < 2) throw DomainError("sample_variance: need at least 2 values");
  const double m = mean(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size() - 1);
}

double standard_error(std::span<const double> x) {
  return std::sqrt(sample_variance(x) / static_cast<double>(x.size()));
}

double median(std::vector<double> x) {
  if (x.empty()) throw DomainError("median: empty sample");
  std::sort(x.begin(), x.end());
  const std::size_t n = x.size();
  if (n % 2 == 1) return x[n / 2];
  const double a = x[n / 2 - 1], b = x[n / 2];
  if (std::isinf(a) || std::isinf(b)) return b;
  return 0.5 * (a + b);
}

std::size_t Histogram::total() const {
  std::size_t t = 0;
  for (auto c : counts) t += c;
  return t;
}

double Histogram::mass_between(double a, double b) const {
  const std::size_t t = total();
  if (t == 0) return 0.0;
  // Edges are computed as lo + i*w; compare with a small slack so that
  // nominal edges such as 0.45 are recognized.
  const double slack = 1e-9 * (edges.back() - edges.front());
  std::size_t in = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (edges[i] >= a - slack && edges[i + 1] <= b + slack) in += counts[i];
  }
  return static_cast<double>(in) / static_cast<double>(t);
}

Histogram make_histogram(std::span<const double> x, std::size_t bins, double lo, double hi) {
  if (bins < 1 || !(hi > lo)) throw DomainError("make_histogram: invalid binning");
  Histogram h;
  h.edges.resize(bins + 1);
  const double w = (hi - lo) / static_cast<double>(bins);
  for (std::size_t i = 0; i <= bins; ++i) h.edges[i] = lo + w * static_cast<double>(i);
  h.edges[bins] = hi;
  h.counts.assign(bins, 0);
  for (double v : x) {
    if (!(v >= lo && v <= hi)) {
      throw DomainError("make_histogram: value " + std::to_string(v) + " outside range");
    }
    auto k = static_cast<std::size_t>((v - lo) / w);
    if (k >= bins) k = bins - 1;
    ++h.counts[k];
  }
  return h;
}

namespace {

std::vector<double> sorted_copy(std::span<const double> s, const char* who) {
  if (s.size() < 20) throw DomainError(std::string(who) + ": need at least 20 samples");
  std::vector<double> v(s.begin(), s.end());
  std::sort(v.begin(), v.end());
  return v;
}

// ECDF jumps from i/n to (i+1)/n at the i-th sorted sample.
double sup_gap(const std::vector<double>& sorted, const std::vector<double>& cdf_at) {
  const double n = static_cast<double>(sorted.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double f = cdf_at[i];
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

}  // namespace

double ks_distance(std::span<const double> samples, const Function& cdf) {
  const auto v = sorted_copy(samples, "ks_distance");
  std::vector<double> f(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) f[i] = cdf(v[i]);
  return sup_gap(v, f);
}

double ks_distance_pdf(std::span<const double> samples, const Function& pdf, double lower) {
  using boost::math::quadrature::exp_sinh;
  using boost::math::quadrature::gauss_kronrod;
  const auto v = sorted_copy(samples, "ks_distance_pdf");
  if (!(lower <= v.front())) throw DomainError("ks_distance_pdf: sample below lower bound");
  std::vector<double> f(v.size());
  double acc;
  if (std::isinf(lower)) {
    exp_sinh<double> left;
    // exp_sinh integrates over (a, inf); mirror the left tail.
    acc = left.integrate([&](double t) { return pdf(2.0 * v.front() - t); }, v.front(),
                         std::numeric_limits<double>::infinity());
  } else {
    acc = gauss_kronrod<double, 15>::integrate(pdf, lower, v.front(), 10, 1e-13);
  }
  f[0] = acc;
  for (std::size_t i = 1; i < v.size(); ++i) {
    // One 15-point rule is exact to rounding on short gaps; only wide tail
    // gaps get adaptive refinement.
    const double gap = v[i] - v[i - 1];
    if (gap > 0.0) {
      acc += gauss_kronrod<double, 15>::integrate(pdf, v[i - 1], v[i], gap > 0.05 ? 8 : 0, 1e-12);
    }
    f[i] = std::min(acc, 1.0);
  }
  return sup_gap(v, f);
}

double ks_two_sample(std::span<const double> a, std::span<const double> b) {
  const auto x = sorted_copy(a, "ks_two_sample");
  const auto y = sorted_copy(b, "ks_two_sample");
  const double n = static_cast<double>(x.size()), m = static_cast<double>(y.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < x.size() && j < y.size()) {
    const double t = std::min(x[i], y[j]);
    while (i < x.size() && x[i] == t) ++i;
    while (j < y.size() && y[j] == t) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / n - static_cast<double>(j) / m));
  }
  return d;
}

double jackknife_se(std::size_t n, const std::function<double(std::size_t)>& statistic) {
  if (n < 2) throw DomainError("jackknife_se: need at least 2 groups");
  std::vector<double> est(n);
  for (std::size_t k = 0; k < n; ++k) est[k] = statistic(k);
  const double m = mean(est);
  double s = 0.0;
  for (double e : est) s += (e - m) * (e - m);
  return std::sqrt(s * static_cast<double>(n - 1) / static_cast<double>(n));
}

}  // namespace igb::stats
