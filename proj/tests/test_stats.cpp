#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "mlap/stats.hpp"
#include "mlap/train.hpp"
#include "test_util.hpp"

using namespace mlap;
using Catch::Approx;

namespace {

// Oracle: exact two-sided p by brute-force enumeration of every way to
// assign n1 of the pooled ranks to the first sample. Independent of the
// implementation's counting scheme.
struct ExactOracle {
  int n1, n2;
  double mean_u;
  double observed_dist;
  long tail = 0, total = 0;

  void recurse(int next_rank, int picked, double rank_sum) {
    const int n = n1 + n2;
    if (picked == n1) {
      const double u = rank_sum - 0.5 * n1 * (n1 + 1);
      ++total;
      if (std::abs(u - mean_u) >= observed_dist - 1e-12) ++tail;
      return;
    }
    if (next_rank > n || picked + (n - next_rank + 1) < n1) return;
    recurse(next_rank + 1, picked + 1, rank_sum + next_rank);
    recurse(next_rank + 1, picked, rank_sum);
  }
};

double exact_two_sided_p(int n1, int n2, double observed_u) {
  ExactOracle o;
  o.n1 = n1;
  o.n2 = n2;
  o.mean_u = 0.5 * n1 * n2;
  o.observed_dist = std::abs(observed_u - o.mean_u);
  o.recurse(1, 0, 0.0);
  return static_cast<double>(o.tail) / static_cast<double>(o.total);
}

}  // namespace

TEST_CASE("separated samples give U = 0 and the enumerated p of 0.1") {
  std::vector<double> a{1, 2, 3}, b{4, 5, 6};
  const StatResult res = mann_whitney_u(a, b);
  CHECK(res.u == 0.0);
  CHECK(res.p == Approx(0.1).epsilon(1e-12));  // 2 of the C(6,3)=20 assignments are this extreme
  CHECK(res.method == "exact");
  CHECK(res.n1 == 3);
  CHECK(res.n2 == 3);
}

TEST_CASE("identical samples are symmetric") {
  std::vector<double> a{1.5, 2.5, 3.5, 9.0}, b{1.5, 2.5, 3.5, 9.0};
  const StatResult res = mann_whitney_u(a, b);
  CHECK(res.z == 0.0);
  CHECK(res.p == 1.0);
}

TEST_CASE("effect size formula r = z / sqrt(N)") {
  // direct check of the formula at z = 2, N = 16
  std::vector<double> a, b;
  for (int i = 0; i < 8; ++i) {
    a.push_back(i);
    b.push_back(i + 0.5);
  }
  const StatResult res = mann_whitney_u(a, b);
  CHECK(res.r == Approx(res.z / 4.0).margin(1e-15));
  CHECK(2.0 / std::sqrt(16.0) == 0.5);
}

TEST_CASE("a fully tied pool is flagged degenerate") {
  std::vector<double> a{3, 3, 3}, b{3, 3};
  const StatResult res = mann_whitney_u(a, b);
  CHECK(res.degenerate);
  CHECK(res.z == 0.0);
  CHECK(res.p == 1.0);
}

TEST_CASE("U_a + U_b = n1*n2 on random samples") {
  RngStream rng(41);
  for (int trial = 0; trial < 200; ++trial) {
    const int n1 = 1 + rng.next_int(12);
    const int n2 = 1 + rng.next_int(12);
    std::vector<double> a(n1), b(n2);
    for (double& v : a) v = rng.next_int(8);  // ties likely
    for (double& v : b) v = rng.next_int(8);
    const StatResult ra = mann_whitney_u(a, b);
    const StatResult rb = mann_whitney_u(b, a);
    REQUIRE(ra.u + rb.u == static_cast<double>(n1) * n2);
  }
}

TEST_CASE("exact p matches the enumeration oracle for small tie-free samples") {
  RngStream rng(43);
  for (int trial = 0; trial < 60; ++trial) {
    const int n1 = 1 + rng.next_int(8);
    const int n2 = 1 + rng.next_int(8);
    std::vector<double> a(n1), b(n2);
    // distinct values, no ties
    std::vector<int> perm = rng.permutation(n1 + n2);
    for (int i = 0; i < n1; ++i) a[i] = perm[i] * 1.25;
    for (int i = 0; i < n2; ++i) b[i] = perm[n1 + i] * 1.25;
    const StatResult res = mann_whitney_u(a, b);
    REQUIRE(res.method == "exact");
    REQUIRE(res.p == Approx(exact_two_sided_p(n1, n2, res.u)).margin(1e-12));
  }
}

TEST_CASE("normal approximation stays close to exact beyond the exact regime") {
  // The exhaustive small-sample bound is part of the acceptance suite; here
  // spot-check the normal path where it actually runs.
  RngStream rng(47);
  for (int trial = 0; trial < 12; ++trial) {
    const int n1 = 9 + rng.next_int(2);
    const int n2 = 9 + rng.next_int(2);
    std::vector<double> a(n1), b(n2);
    std::vector<int> perm = rng.permutation(n1 + n2);
    for (int i = 0; i < n1; ++i) a[i] = perm[i] + 0.5;
    for (int i = 0; i < n2; ++i) b[i] = perm[n1 + i] + 0.5;
    const StatResult res = mann_whitney_u(a, b);
    REQUIRE(res.method == "normal");
    const double exact = exact_two_sided_p(n1, n2, res.u);
    // the plain normal approximation tracks the mid-p enumeration; allow a
    // modest band against the conventional exact value
    CHECK(std::abs(res.p - exact) < 0.05);
  }
}

TEST_CASE("tie-corrected variance shrinks with ties") {
  std::vector<double> a{1, 2, 2, 3}, b{2, 4, 5, 6};
  const StatResult res = mann_whitney_u(a, b);
  // sigma^2 with ties must be below the tie-free value n1*n2*(n+1)/12
  const double z_tiefree = (res.u - 8.0) / std::sqrt(4.0 * 4.0 * 9.0 / 12.0);
  CHECK(std::abs(res.z) > std::abs(z_tiefree));
}

TEST_CASE("bonferroni correction") {
  SECTION("scales by the comparison count") {
    std::vector<double> p{0.01, 0.2, 0.03, 0.5, 0.001};
    const auto adj = bonferroni(p);
    CHECK(adj[0] == Approx(0.05).epsilon(1e-12));
    CHECK(adj[4] == Approx(0.005).epsilon(1e-12));
  }
  SECTION("clamps at one") {
    std::vector<double> p{0.5, 0.9, 0.2};
    const auto adj = bonferroni(p);
    CHECK(adj[0] == 1.0);
    CHECK(adj[1] == 1.0);
  }
  SECTION("a single comparison is unchanged") {
    std::vector<double> p{0.037};
    CHECK(bonferroni(p)[0] == Approx(0.037).epsilon(1e-15));
  }
}

TEST_CASE("roc_auc equals U_pos/(n1*n2) exactly") {
  RngStream rng(53);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + rng.next_int(60);
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    bool has0 = false, has1 = false;
    for (int i = 0; i < n; ++i) {
      scores[i] = rng.next_int(12) * 0.25;
      labels[i] = rng.next_int(2);
      (labels[i] ? has1 : has0) = true;
    }
    if (!has0 || !has1) continue;
    std::vector<double> pos, neg;
    for (int i = 0; i < n; ++i) (labels[i] ? pos : neg).push_back(scores[i]);
    const StatResult res = mann_whitney_u(pos, neg);
    REQUIRE(roc_auc_score(scores, labels) ==
            res.u / (static_cast<double>(pos.size()) * neg.size()));
  }
}
