#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace sparselock::leakage {

struct EmpiricalDist {
  std::vector<double> support;  // bin centers, ascending
  std::vector<double> probs;
};

inline constexpr int kFisherBins = 8;
inline constexpr int kMiBins = 32;
inline constexpr double kRangeSigmas = 2.5;

// Equal-width bins over [lo, hi], outliers clipped into the edge bins,
// additive smoothing eps = 1/(10 n), renormalized. Support ordered by value.
EmpiricalDist make_distribution(std::span<const double> samples, int bins, double lo, double hi);
// Range defaults to mean +/- kRangeSigmas * stddev of the samples.
EmpiricalDist make_distribution(std::span<const double> samples, int bins = kFisherBins);
// Common clipping range for comparable distributions.
std::pair<double, double> pooled_range(std::span<const double> a, std::span<const double> b,
                                       double sigmas = kRangeSigmas);

// Discrete Fisher information sum_{i=1}^{n-1} (p_{i+1}-p_i)^2 / p_i over the
// value-ordered support. Fewer than 2 bins -> 0 (degenerate).
double fisher_discrete(const EmpiricalDist& d);

// Lower bound on estimator variance, 1/FI; FI == 0 -> +infinity.
double cramer_rao(double fisher_information);

// Plug-in histogram estimate in bits; a variable with small discrete support
// uses its native values as bins.
double mutual_information(std::span<const double> x, std::span<const double> y,
                          int bins = kMiBins);

double pearson(std::span<const double> x, std::span<const double> y);

struct RunsResult {
  double p_value = 0.0;
  bool applicable = false;  // proportion precheck |pi - 1/2| < 2/sqrt(n)
  std::uint64_t runs = 0;
  double proportion = 0.0;
};

// SP800-22-style runs test on a 0/1 sequence.
RunsResult runs_test(const std::vector<int>& bits);
std::vector<int> binarize_by_median(std::span<const double> samples);

// Two-sample Cramer-von Mises statistic T = nm/N^2 * sum (F_n - G_m)^2 over
// the combined sample.
double cvm_distance(std::span<const double> a, std::span<const double> b);
inline constexpr double kCvmCritical5 = 0.461;  // asymptotic 5% point

}  // namespace sparselock::leakage
