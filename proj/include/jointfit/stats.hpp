#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace jointfit {

inline constexpr double kLog2Pi = 1.8378770664093454836;

/// Standard normal CDF.
double normal_cdf(double x);

/// Sample quantile with linear interpolation between order statistics
/// (Hyndman-Fan type 7). `p` in [0, 1].
double quantile(std::span<const double> values, double p);

/// Same as `quantile` but for already sorted input.
double quantile_sorted(std::span<const double> sorted, double p);

double mean(std::span<const double> values);

/// Unbiased (n-1) sample variance; 0 when fewer than two values.
double variance(std::span<const double> values);

double log_sum_exp(std::span<const double> values);

/// Pearson correlation.
double correlation(std::span<const double> a, std::span<const double> b);

/// Spearman rank correlation (average ranks for ties).
double spearman(std::span<const double> a, std::span<const double> b);

/// Counter-based seed derivation used to split independent RNG streams.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

}  // namespace jointfit
