#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "mlap/error.hpp"

namespace mlap {

// Two-sided Mann-Whitney U test. U is reported for the first sample, with
// midranks over the pooled sample. z uses the tie-corrected standard
// deviation and no continuity correction; the effect size is r = z/sqrt(N).
// For small tie-free samples (n1, n2 <= 8) the p-value comes from the exact
// U distribution, counted by dynamic programming over rank subsets; the
// normal approximation is only trustworthy beyond that range.
struct StatResult {
  double u = 0.0;
  double z = 0.0;
  double p = 1.0;
  double r = 0.0;
  int n1 = 0, n2 = 0;
  bool degenerate = false;   // all pooled values identical
  std::string method;        // "exact" or "normal"
};

namespace detail {

inline double normal_two_sided_p(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

// Number of n1-subsets of ranks 1..n1+n2 attaining each U value.
inline std::vector<double> exact_u_counts(int n1, int n2) {
  const int umax = n1 * n2;
  // dp[k][u]: subsets of size k with U statistic u, ranks processed so far.
  std::vector<std::vector<double>> dp(n1 + 1, std::vector<double>(umax + 1, 0.0));
  dp[0][0] = 1.0;
  for (int rank = 1; rank <= n1 + n2; ++rank) {
    for (int k = std::min(rank, n1); k >= 1; --k) {
      // choosing this rank as the k-th member adds (rank - k) to U
      const int add = rank - k;
      for (int u = umax; u >= add; --u) dp[k][u] += dp[k - 1][u - add];
    }
  }
  return dp[n1];
}

}  // namespace detail

inline StatResult mann_whitney_u(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw ConfigError("mann_whitney_u: both samples must be non-empty");
  const int n1 = static_cast<int>(a.size());
  const int n2 = static_cast<int>(b.size());
  const int n = n1 + n2;

  std::vector<std::pair<double, int>> pooled;  // (value, sample id)
  pooled.reserve(n);
  for (double v : a) pooled.emplace_back(v, 0);
  for (double v : b) pooled.emplace_back(v, 1);
  std::sort(pooled.begin(), pooled.end(),
            [](const auto& x, const auto& y) { return x.first < y.first; });

  double rank_sum_a = 0.0;
  double tie_term = 0.0;  // sum of t^3 - t over tie groups
  bool has_ties = false;
  int i = 0;
  while (i < n) {
    int j = i;
    while (j < n && pooled[j].first == pooled[i].first) ++j;
    const int t = j - i;
    if (t > 1) {
      has_ties = true;
      tie_term += static_cast<double>(t) * t * t - t;
    }
    const double midrank = 0.5 * ((i + 1) + j);
    for (int k = i; k < j; ++k)
      if (pooled[k].second == 0) rank_sum_a += midrank;
    i = j;
  }

  StatResult res;
  res.n1 = n1;
  res.n2 = n2;
  res.u = rank_sum_a - 0.5 * static_cast<double>(n1) * (n1 + 1);

  const double mean_u = 0.5 * static_cast<double>(n1) * n2;
  const double var_u = (static_cast<double>(n1) * n2 / 12.0) *
                       ((n + 1) - tie_term / (static_cast<double>(n) * (n - 1)));
  if (var_u <= 0.0) {
    res.degenerate = true;
    res.z = 0.0;
    res.p = 1.0;
    res.r = 0.0;
    res.method = "degenerate";
    return res;
  }
  res.z = (res.u - mean_u) / std::sqrt(var_u);
  res.r = res.z / std::sqrt(static_cast<double>(n));

  if (!has_ties && n1 <= 8 && n2 <= 8) {
    const std::vector<double> counts = detail::exact_u_counts(n1, n2);
    double total = 0.0, tail = 0.0;
    const double dist = std::abs(res.u - mean_u);
    for (int u = 0; u < static_cast<int>(counts.size()); ++u) {
      total += counts[u];
      if (std::abs(u - mean_u) >= dist - 1e-9) tail += counts[u];
    }
    res.p = tail / total;
    res.method = "exact";
  } else {
    res.p = detail::normal_two_sided_p(res.z);
    res.method = "normal";
  }
  res.p = std::min(res.p, 1.0);
  return res;
}

// p_adj = min(1, m * p) with m the number of comparisons.
inline std::vector<double> bonferroni(std::span<const double> p_values) {
  const double m = static_cast<double>(p_values.size());
  std::vector<double> out;
  out.reserve(p_values.size());
  for (double p : p_values) out.push_back(std::min(1.0, m * p));
  return out;
}

}  // namespace mlap
