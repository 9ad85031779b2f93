#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

namespace hmmcpd {

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// log(sum(exp(v))) with max subtraction. Summation runs in index order.
inline double logsumexp(std::span<const double> v) {
  double m = kNegInf;
  for (double x : v) m = std::max(m, x);
  if (m == kNegInf) return kNegInf;
  if (m == kInf) return kInf;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

inline double logaddexp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

/// Pairwise summation; the result depends only on the order of `v`.
inline double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 32) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

/// Sample statistics of a fixed-order vector of per-path values.
struct SampleStats {
  std::size_t count = 0;
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation (n-1)

  double se() const { return count > 0 ? sd / std::sqrt(static_cast<double>(count)) : kInf; }
  double ci_lo(double z = 1.959963984540054) const { return mean - z * se(); }
  double ci_hi(double z = 1.959963984540054) const { return mean + z * se(); }
  double half_width(double z = 1.959963984540054) const { return z * se(); }
};

inline SampleStats sample_stats(std::span<const double> v) {
  SampleStats s;
  s.count = v.size();
  if (v.empty()) return s;
  s.mean = pairwise_sum(v) / static_cast<double>(v.size());
  if (v.size() > 1) {
    std::vector<double> dev(v.size());
    for (std::size_t k = 0; k < v.size(); ++k) dev[k] = (v[k] - s.mean) * (v[k] - s.mean);
    s.sd = std::sqrt(pairwise_sum(dev) / static_cast<double>(v.size() - 1));
  }
  return s;
}

inline bool approx_equal(double a, double b, double rel = 1e-12) {
  if (a == b) return true;
  return std::abs(a - b) <= rel * std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace hmmcpd
