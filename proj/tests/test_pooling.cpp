#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "mlap/pooling.hpp"
#include "test_util.hpp"

using namespace mlap;
using Catch::Approx;

namespace {

AttentionGate zero_gate(int in, int hidden) {
  RngStream rng(0);
  AttentionGate g = AttentionGate::init(in, hidden, rng);
  g.net.w1.fill(0.0);
  g.net.b1.fill(0.0);
  g.net.w2.fill(0.0);
  g.net.b2.fill(0.0);
  return g;
}

}  // namespace

TEST_CASE("attention_pool basics") {
  RngStream rng(1);
  SECTION("a single-node graph pools to that node's row") {
    AttentionGate gate = AttentionGate::init(3, 3, rng);
    Tensor h = testutil::random_tensor(rng, 1, 3);
    std::vector<int> seg{0};
    Tape tape;
    Tensor out = attention_pool(tape, h, seg, 1, gate);
    for (int j = 0; j < 3; ++j) CHECK(out.at(0, j) == Approx(h.at(0, j)).margin(1e-14));
  }
  SECTION("an all-zero gate gives uniform attention, i.e. the per-graph mean") {
    AttentionGate gate = zero_gate(3, 3);
    Tensor h = testutil::random_tensor(rng, 6, 3);
    std::vector<int> seg{0, 0, 0, 1, 1, 1};
    Tape tape;
    Tensor out = attention_pool(tape, h, seg, 2, gate);
    for (int g = 0; g < 2; ++g)
      for (int j = 0; j < 3; ++j) {
        const double mean = (h.at(3 * g, j) + h.at(3 * g + 1, j) + h.at(3 * g + 2, j)) / 3.0;
        CHECK(out.at(g, j) == Approx(mean).margin(1e-13));
      }
  }
  SECTION("adding a constant to every score in a graph changes nothing") {
    Tensor h = testutil::random_tensor(rng, 5, 4);
    Tensor s = testutil::random_tensor(rng, 5, 1);
    std::vector<int> seg{0, 0, 1, 1, 1};
    Tape tape;
    Tensor base = tape.segment_softmax_weighted_sum(h, s, seg, 2);
    Tensor shifted_scores(5, 1);
    for (int i = 0; i < 5; ++i) shifted_scores.at(i, 0) = s.at(i, 0) + (seg[i] == 0 ? 7.5 : -3.25);
    Tensor shifted = tape.segment_softmax_weighted_sum(h, shifted_scores, seg, 2);
    for (size_t i = 0; i < base.size(); ++i)
      CHECK(std::abs(base.data()[i] - shifted.data()[i]) < 1e-10);
  }
}

TEST_CASE("mlap_aggregate modes") {
  RngStream rng(2);
  std::vector<Tensor> reps;
  for (int l = 0; l < 3; ++l) reps.push_back(testutil::random_tensor(rng, 4, 5));

  SECTION("a single layer aggregates to itself in both modes") {
    std::vector<Tensor> one{reps[0]};
    Tensor w(1, 1);
    w.fill(1.0);
    Tape tape;
    Tensor s = mlap_aggregate(tape, one, Aggregator::sum);
    Tensor v = mlap_aggregate(tape, one, Aggregator::weighted, &w);
    for (size_t i = 0; i < s.size(); ++i) {
      CHECK(s.data()[i] == reps[0].data()[i]);
      CHECK(v.data()[i] == reps[0].data()[i]);
    }
  }
  SECTION("weighted with all-ones weights equals sum exactly") {
    Tensor w(1, 3);
    w.fill(1.0);
    Tape tape;
    Tensor s = mlap_aggregate(tape, reps, Aggregator::sum);
    Tensor v = mlap_aggregate(tape, reps, Aggregator::weighted, &w);
    for (size_t i = 0; i < s.size(); ++i) REQUIRE(s.data()[i] == v.data()[i]);
  }
  SECTION("a one-hot weight selects that layer") {
    Tensor w(1, 3);
    w.at(0, 1) = 1.0;
    Tape tape;
    Tensor v = mlap_aggregate(tape, reps, Aggregator::weighted, &w);
    for (size_t i = 0; i < v.size(); ++i) CHECK(v.data()[i] == reps[1].data()[i]);
  }
  SECTION("weighted without weights is rejected") {
    Tape tape;
    CHECK_THROWS_AS(mlap_aggregate(tape, reps, Aggregator::weighted, nullptr), ConfigError);
  }
}

TEST_CASE("jk_aggregate modes") {
  RngStream rng(3);
  Tensor h1 = testutil::random_tensor(rng, 4, 3);

  SECTION("depth 1 returns the layer itself in all three modes") {
    std::vector<Tensor> one{h1};
    Tape tape;
    for (Aggregator mode : {Aggregator::sum, Aggregator::concat, Aggregator::maxpool}) {
      Tensor out = jk_aggregate(tape, one, mode);
      REQUIRE(out.cols() == 3);
      for (size_t i = 0; i < out.size(); ++i) CHECK(out.data()[i] == h1.data()[i]);
    }
  }
  SECTION("maxpool is idempotent on duplicated layers") {
    std::vector<Tensor> two{h1, h1};
    Tape tape;
    Tensor out = jk_aggregate(tape, two, Aggregator::maxpool);
    for (size_t i = 0; i < out.size(); ++i) CHECK(out.data()[i] == h1.data()[i]);
  }
  SECTION("sum of a layer and its negation is zero") {
    Tensor neg(4, 3);
    for (size_t i = 0; i < neg.size(); ++i) neg.data()[i] = -h1.data()[i];
    std::vector<Tensor> two{h1, neg};
    Tape tape;
    Tensor out = jk_aggregate(tape, two, Aggregator::sum);
    for (size_t i = 0; i < out.size(); ++i) CHECK(out.data()[i] == 0.0);
  }
  SECTION("concat stacks columns layer by layer") {
    Tensor h2 = testutil::random_tensor(rng, 4, 3);
    std::vector<Tensor> two{h1, h2};
    Tape tape;
    Tensor out = jk_aggregate(tape, two, Aggregator::concat);
    REQUIRE(out.cols() == 6);
    for (int n = 0; n < 4; ++n)
      for (int j = 0; j < 3; ++j) {
        CHECK(out.at(n, j) == h1.at(n, j));
        CHECK(out.at(n, 3 + j) == h2.at(n, j));
      }
  }
}

TEST_CASE("naive_readout only sees the last layer") {
  RngStream rng(4);
  AttentionGate gate = AttentionGate::init(3, 3, rng);
  Tensor h_last = testutil::random_tensor(rng, 5, 3);
  std::vector<int> seg{0, 0, 0, 1, 1};
  Tape tape;
  Tensor a = naive_readout(tape, h_last, seg, 2, gate);
  Tensor b = naive_readout(tape, h_last, seg, 2, gate);  // same input, same output
  for (size_t i = 0; i < a.size(); ++i) CHECK(a.data()[i] == b.data()[i]);
}

TEST_CASE("every readout is invariant to node permutation within a graph") {
  RngStream rng(5);
  const int n = 7, d = 4, L = 3;
  std::vector<int> seg{0, 0, 0, 1, 1, 1, 1};
  std::vector<Tensor> reps;
  for (int l = 0; l < L; ++l) reps.push_back(testutil::random_tensor(rng, n, d));
  AttentionGate gate_d = AttentionGate::init(d, d, rng);
  AttentionGate gate_ld = AttentionGate::init(L * d, d, rng);

  // permute nodes within each graph
  std::vector<int> perm{2, 0, 1, 6, 3, 5, 4};
  std::vector<Tensor> preps;
  for (int l = 0; l < L; ++l) {
    Tensor p(n, d);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) p.at(perm[i], j) = reps[l].at(i, j);
    preps.push_back(p);
  }

  auto expect_equal = [](const Tensor& a, const Tensor& b) {
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) REQUIRE(std::abs(a.data()[i] - b.data()[i]) < 1e-10);
  };

  Tape t1, t2;
  expect_equal(naive_readout(t1, reps.back(), seg, 2, gate_d),
               naive_readout(t2, preps.back(), seg, 2, gate_d));
  for (Aggregator mode : {Aggregator::sum, Aggregator::maxpool}) {
    expect_equal(jk_readout(t1, jk_aggregate(t1, reps, mode), seg, 2, gate_d),
                 jk_readout(t2, jk_aggregate(t2, preps, mode), seg, 2, gate_d));
  }
  expect_equal(jk_readout(t1, jk_aggregate(t1, reps, Aggregator::concat), seg, 2, gate_ld),
               jk_readout(t2, jk_aggregate(t2, preps, Aggregator::concat), seg, 2, gate_ld));
  // mlap: pool each layer with its own gate, then sum
  std::vector<Tensor> pooled1, pooled2;
  for (int l = 0; l < L; ++l) {
    pooled1.push_back(attention_pool(t1, reps[l], seg, 2, gate_d));
    pooled2.push_back(attention_pool(t2, preps[l], seg, 2, gate_d));
  }
  expect_equal(mlap_aggregate(t1, pooled1, Aggregator::sum),
               mlap_aggregate(t2, pooled2, Aggregator::sum));
}

TEST_CASE("pinned per-layer attention reproduces the JK-Sum readout") {
  RngStream rng(6);
  SECTION("random representations across depths and batch sizes") {
    for (int L : {2, 3, 5}) {
      for (int G : {1, 2, 5}) {
        RngStream gate_rng(rng.next_u64());
        AttentionGate gate = AttentionGate::init(4, 4, gate_rng);
        const int per = 3;
        const int n = G * per;
        std::vector<int> seg;
        for (int g = 0; g < G; ++g)
          for (int k = 0; k < per; ++k) seg.push_back(g);
        std::vector<Tensor> reps;
        for (int l = 0; l < L; ++l) reps.push_back(testutil::random_tensor(rng, n, 4));
        CHECK(mlap_jk_equivalence_check(reps, seg, G, gate) < 1e-10);
      }
    }
  }
  SECTION("depth 1 difference is zero up to summation order") {
    AttentionGate gate = AttentionGate::init(3, 3, rng);
    std::vector<Tensor> reps{testutil::random_tensor(rng, 5, 3)};
    std::vector<int> seg{0, 0, 0, 1, 1};
    CHECK(mlap_jk_equivalence_check(reps, seg, 2, gate) < 1e-12);
  }
  SECTION("a constant gate makes both sides the layer-summed mean") {
    AttentionGate gate = zero_gate(3, 3);
    std::vector<Tensor> reps;
    for (int l = 0; l < 3; ++l) reps.push_back(testutil::random_tensor(rng, 6, 3));
    std::vector<int> seg{0, 0, 0, 0, 1, 1};
    CHECK(mlap_jk_equivalence_check(reps, seg, 2, gate) < 1e-12);
  }
}
