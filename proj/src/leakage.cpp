#include "sparselock/leakage.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "sparselock/error.hpp"

namespace sparselock::leakage {

namespace {

std::pair<double, double> mean_stddev(std::span<const double> samples) {
  if (samples.empty()) throw DomainError("no samples");
  double mean = 0.0;
  for (double v : samples) mean += v;
  mean /= static_cast<double>(samples.size());
  double var = 0.0;
  for (double v : samples) var += (v - mean) * (v - mean);
  var /= static_cast<double>(samples.size());
  return {mean, std::sqrt(var)};
}

// bin index with outliers clipped into the edge bins
int clip_bin(double v, double lo, double width, int bins) {
  int b = static_cast<int>(std::floor((v - lo) / width));
  return std::clamp(b, 0, bins - 1);
}

std::vector<int> assign_bins(std::span<const double> samples, int bins, double& lo, double& hi) {
  std::set<double> distinct(samples.begin(), samples.end());
  std::vector<int> idx(samples.size());
  if (static_cast<int>(distinct.size()) <= bins) {
    // small discrete support: one bin per native value
    std::map<double, int> pos;
    int k = 0;
    for (double v : distinct) pos[v] = k++;
    for (std::size_t i = 0; i < samples.size(); ++i) idx[i] = pos[samples[i]];
    lo = *distinct.begin();
    hi = *distinct.rbegin();
    return idx;
  }
  lo = *distinct.begin();
  hi = *distinct.rbegin();
  double width = (hi - lo) / bins;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    idx[i] = clip_bin(samples[i], lo, width, bins);
  }
  return idx;
}

}  // namespace

EmpiricalDist make_distribution(std::span<const double> samples, int bins, double lo, double hi) {
  if (samples.empty()) throw DomainError("no samples");
  if (bins < 1) throw DomainError("need at least one bin");
  EmpiricalDist d;
  if (hi - lo < 1e-12) {
    d.support = {lo};
    d.probs = {1.0};
    return d;
  }
  double width = (hi - lo) / bins;
  std::vector<double> counts(static_cast<std::size_t>(bins), 0.0);
  for (double v : samples) ++counts[static_cast<std::size_t>(clip_bin(v, lo, width, bins))];
  double n = static_cast<double>(samples.size());
  double eps = 1.0 / (10.0 * n);
  double norm = 1.0 + bins * eps;
  for (int b = 0; b < bins; ++b) {
    d.support.push_back(lo + (b + 0.5) * width);
    d.probs.push_back((counts[static_cast<std::size_t>(b)] / n + eps) / norm);
  }
  return d;
}

EmpiricalDist make_distribution(std::span<const double> samples, int bins) {
  auto [mean, sd] = mean_stddev(samples);
  return make_distribution(samples, bins, mean - kRangeSigmas * sd, mean + kRangeSigmas * sd);
}

std::pair<double, double> pooled_range(std::span<const double> a, std::span<const double> b,
                                       double sigmas) {
  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  auto [mean, sd] = mean_stddev(pooled);
  return {mean - sigmas * sd, mean + sigmas * sd};
}

double fisher_discrete(const EmpiricalDist& d) {
  if (d.probs.size() < 2) return 0.0;
  double fi = 0.0;
  for (std::size_t i = 0; i + 1 < d.probs.size(); ++i) {
    if (d.probs[i] <= 0.0) throw DomainError("fisher needs positive probabilities");
    double step = d.probs[i + 1] - d.probs[i];
    fi += step * step / d.probs[i];
  }
  return fi;
}

double cramer_rao(double fisher_information) {
  if (fisher_information < 0.0) throw DomainError("negative fisher information");
  if (fisher_information == 0.0) return std::numeric_limits<double>::infinity();
  return 1.0 / fisher_information;
}

double mutual_information(std::span<const double> x, std::span<const double> y, int bins) {
  if (x.size() != y.size() || x.empty()) throw DomainError("mi needs paired samples");
  if (bins < 1) throw DomainError("need at least one bin");
  double lo, hi;
  std::vector<int> xi = assign_bins(x, bins, lo, hi);
  std::vector<int> yi = assign_bins(y, bins, lo, hi);
  std::map<std::pair<int, int>, double> joint;
  std::map<int, double> px, py;
  double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    joint[{xi[i], yi[i]}] += 1.0 / n;
    px[xi[i]] += 1.0 / n;
    py[yi[i]] += 1.0 / n;
  }
  double mi = 0.0;
  for (const auto& [cell, p] : joint) {
    mi += p * std::log2(p / (px[cell.first] * py[cell.second]));
  }
  return std::max(mi, 0.0);
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw DomainError("pearson needs paired samples");
  auto [mx, sx] = mean_stddev(x);
  auto [my, sy] = mean_stddev(y);
  if (sx == 0.0 || sy == 0.0) throw DomainError("pearson of a constant input");
  double cov = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) cov += (x[i] - mx) * (y[i] - my);
  cov /= static_cast<double>(x.size());
  return cov / (sx * sy);
}

RunsResult runs_test(const std::vector<int>& bits) {
  RunsResult r;
  std::size_t n = bits.size();
  if (n < 2) return r;
  double ones = 0.0;
  for (int b : bits) {
    if (b != 0 && b != 1) throw DomainError("runs test wants 0/1 bits");
    ones += b;
  }
  double pi = ones / static_cast<double>(n);
  r.proportion = pi;
  if (std::abs(pi - 0.5) >= 2.0 / std::sqrt(static_cast<double>(n))) {
    r.applicable = false;
    return r;
  }
  std::uint64_t v = 1;
  for (std::size_t i = 0; i + 1 < n; ++i) v += bits[i] != bits[i + 1];
  r.runs = v;
  r.applicable = true;
  double num = std::abs(static_cast<double>(v) - 2.0 * static_cast<double>(n) * pi * (1.0 - pi));
  double den = 2.0 * std::sqrt(2.0 * static_cast<double>(n)) * pi * (1.0 - pi);
  r.p_value = std::erfc(num / den);
  return r;
}

std::vector<int> binarize_by_median(std::span<const double> samples) {
  if (samples.empty()) throw DomainError("no samples");
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  std::size_t n = sorted.size();
  double median = n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  std::vector<int> bits;
  bits.reserve(n);
  for (double v : samples) bits.push_back(v > median ? 1 : 0);
  return bits;
}

double cvm_distance(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw DomainError("cvm needs two nonempty samples");
  std::vector<double> sa(a.begin(), a.end()), sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  std::vector<double> z;
  z.reserve(sa.size() + sb.size());
  z.insert(z.end(), sa.begin(), sa.end());
  z.insert(z.end(), sb.begin(), sb.end());
  std::sort(z.begin(), z.end());
  double n = static_cast<double>(sa.size()), m = static_cast<double>(sb.size());
  double nn = n + m;
  double sum = 0.0;
  for (double v : z) {
    double f = static_cast<double>(std::upper_bound(sa.begin(), sa.end(), v) - sa.begin()) / n;
    double g = static_cast<double>(std::upper_bound(sb.begin(), sb.end(), v) - sb.begin()) / m;
    sum += (f - g) * (f - g);
  }
  return (n * m / (nn * nn)) * sum;
}

}  // namespace sparselock::leakage
