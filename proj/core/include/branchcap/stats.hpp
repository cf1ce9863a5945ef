// Statistical backend for the verification experiments: the two-sample
// Kolmogorov-Smirnov statistic with the asymptotic p-value, and small
// summary helpers shared across reports.

#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace branchcap {

struct KsResult {
  double statistic = 0.0;  // sup |F1 - F2|
  double p_value = 1.0;    // asymptotic Kolmogorov tail
};

KsResult ks_two_sample(std::span<const double> s1, std::span<const double> s2);

// Survival function of the Kolmogorov distribution, Q(lambda) =
// 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 lambda^2).
double kolmogorov_tail(double lambda);

double mean_of(std::span<const double> v);
double variance_of(std::span<const double> v);             // sample variance
double standard_error_of_mean(std::span<const double> v);
// Standard error of the sample variance via the fourth central moment.
double standard_error_of_variance(std::span<const double> v);

// Nearest-rank quantile on a copy of the data; q in [0, 1].
double quantile_of(std::span<const double> v, double q);
double median_of(std::span<const double> v);

// Empirical CDF of `sample` evaluated at t.
double ecdf_at(std::span<const double> sorted_sample, double t);

bool strictly_decreasing(std::span<const double> v);
// Non-increasing with overall improvement (or identically zero).
bool trend_decreasing(std::span<const double> v);

}  // namespace branchcap
