#include "branchcap/stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace branchcap {

KsResult ks_two_sample(std::span<const double> s1, std::span<const double> s2) {
  if (s1.empty() || s2.empty())
    throw std::invalid_argument("ks_two_sample: samples must be non-empty");
  std::vector<double> a(s1.begin(), s1.end());
  std::vector<double> b(s2.begin(), s2.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());

  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double t = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= t) ++i;  // consume ties on both sides
    while (j < b.size() && b[j] <= t) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na -
                             static_cast<double>(j) / nb));
  }

  KsResult res;
  res.statistic = d;
  const double ne = std::sqrt(na * nb / (na + nb));
  const double lambda = (ne + 0.12 + 0.11 / ne) * d;  // finite-sample correction
  res.p_value = kolmogorov_tail(lambda);
  return res;
}

double kolmogorov_tail(double lambda) {
  if (lambda <= 0.0) return 1.0;
  double sum = 0.0;
  double sign = 1.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += sign * term;
    sign = -sign;
    if (term < 1e-16) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

double mean_of(std::span<const double> v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double variance_of(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

double standard_error_of_mean(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  return std::sqrt(variance_of(v) / static_cast<double>(v.size()));
}

double standard_error_of_variance(std::span<const double> v) {
  const std::size_t n = v.size();
  if (n < 4) return 0.0;
  const double m = mean_of(v);
  double m2 = 0.0, m4 = 0.0;
  for (double x : v) {
    const double d2 = (x - m) * (x - m);
    m2 += d2;
    m4 += d2 * d2;
  }
  m2 /= static_cast<double>(n);
  m4 /= static_cast<double>(n);
  const double var_of_var = (m4 - m2 * m2) / static_cast<double>(n);
  return var_of_var > 0.0 ? std::sqrt(var_of_var) : 0.0;
}

double quantile_of(std::span<const double> v, double q) {
  if (v.empty()) throw std::invalid_argument("quantile_of: empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("quantile_of: q outside [0,1]");
  std::vector<double> s(v.begin(), v.end());
  std::sort(s.begin(), s.end());
  const std::size_t idx = std::min(
      s.size() - 1,
      static_cast<std::size_t>(std::ceil(q * static_cast<double>(s.size())) -
                               (q > 0.0 ? 1 : 0)));
  return s[idx];
}

double median_of(std::span<const double> v) { return quantile_of(v, 0.5); }

double ecdf_at(std::span<const double> sorted_sample, double t) {
  const auto it =
      std::upper_bound(sorted_sample.begin(), sorted_sample.end(), t);
  return static_cast<double>(it - sorted_sample.begin()) /
         static_cast<double>(sorted_sample.size());
}

bool strictly_decreasing(std::span<const double> v) {
  for (std::size_t i = 1; i < v.size(); ++i)
    if (!(v[i] < v[i - 1])) return false;
  return true;
}

bool trend_decreasing(std::span<const double> v) {
  if (v.size() < 2) return true;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[i - 1]) return false;
  return v.back() < v.front() || v.front() == 0.0;
}

}  // namespace branchcap
