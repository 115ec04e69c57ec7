#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <queue>
#include <set>

#include "mlap/dataset_io.hpp"
#include "mlap/graph.hpp"
#include "mlap/synthetic.hpp"
#include "test_util.hpp"

using namespace mlap;

namespace {

// Shortest cycle length of a small undirected graph given as edge pairs:
// for every edge, remove it and measure the shortest remaining path
// between its endpoints.
int girth(int num_nodes, const std::vector<std::array<int, 2>>& undirected) {
  int best = std::numeric_limits<int>::max();
  for (size_t skip = 0; skip < undirected.size(); ++skip) {
    std::vector<std::vector<int>> adj(num_nodes);
    for (size_t e = 0; e < undirected.size(); ++e) {
      if (e == skip) continue;
      adj[undirected[e][0]].push_back(undirected[e][1]);
      adj[undirected[e][1]].push_back(undirected[e][0]);
    }
    std::vector<int> dist(num_nodes, -1);
    std::queue<int> q;
    q.push(undirected[skip][0]);
    dist[undirected[skip][0]] = 0;
    while (!q.empty()) {
      const int u = q.front();
      q.pop();
      for (int v : adj[u])
        if (dist[v] < 0) {
          dist[v] = dist[u] + 1;
          q.push(v);
        }
    }
    if (dist[undirected[skip][1]] >= 0) best = std::min(best, dist[undirected[skip][1]] + 1);
  }
  return best;
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("component generator produces the three fixed 5-node shapes") {
  const auto a = gen_component(ComponentKind::A, 0);
  const std::set<std::pair<int, int>> a_set(
      {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {0, 2}});
  std::set<std::pair<int, int>> got;
  for (const auto& e : a) got.insert({e[0], e[1]});
  CHECK(got == a_set);

  for (ComponentKind k : {ComponentKind::A, ComponentKind::B, ComponentKind::C}) {
    const auto edges = gen_component(k, 0);
    CHECK(edges.size() == 5);  // 4 path edges plus one extra
    int max_node = 0;
    for (const auto& e : edges) max_node = std::max({max_node, e[0], e[1]});
    CHECK(max_node == 4);
  }

  // kinds are distinguishable by girth
  CHECK(girth(5, gen_component(ComponentKind::A, 0)) == 3);
  CHECK(girth(5, gen_component(ComponentKind::B, 0)) == 4);
  CHECK(girth(5, gen_component(ComponentKind::C, 0)) == 5);

  const auto shifted = gen_component(ComponentKind::B, 10);
  for (const auto& e : shifted) {
    CHECK(e[0] >= 10);
    CHECK(e[1] <= 14);
  }
}

TEST_CASE("synthetic graphs have the fixed size and label formula") {
  RngStream rng(3);
  for (int c = 0; c < 3; ++c)
    for (int p = 0; p < 3; ++p) {
      GraphInstance g = gen_synthetic_graph(static_cast<ComponentKind>(c),
                                            static_cast<ComponentKind>(p), rng);
      CHECK(g.num_nodes == 25);
      CHECK(g.edges.size() == 70);
      CHECK(g.label == 3 * c + p);
      CHECK(g.node_feature_columns() == 0);
      CHECK(g.edge_feature_columns() == 0);

      // symmetric, no self-loops, no duplicate directed edges
      std::set<std::pair<int, int>> directed;
      for (const auto& e : g.edges) {
        CHECK(e[0] != e[1]);
        CHECK(directed.insert({e[0], e[1]}).second);
      }
      for (const auto& e : g.edges) CHECK(directed.count({e[1], e[0]}) == 1);
    }
}

TEST_CASE("synthetic dataset size, labels and uniqueness") {
  SyntheticSpec spec;
  spec.per_class_count = 20;
  spec.seed = 5;
  const auto ds = gen_synthetic_dataset(spec);
  REQUIRE(ds.size() == 180);
  std::vector<int> counts(9, 0);
  for (const auto& g : ds) counts[g.label]++;
  for (int c = 0; c < 9; ++c) CHECK(counts[c] == 20);

  SECTION("per_class 1 yields one graph per label") {
    SyntheticSpec one;
    one.per_class_count = 1;
    const auto tiny = gen_synthetic_dataset(one);
    REQUIRE(tiny.size() == 9);
    std::set<int> labels;
    for (const auto& g : tiny) labels.insert(g.label);
    CHECK(labels.size() == 9);
  }

  SECTION("within a class no two graphs share the random extra edge set") {
    // base edges are the first 30 undirected pairs; the extras the last 5
    std::set<std::vector<std::pair<int, int>>> seen;
    for (const auto& g : ds) {
      if (g.label != 4) continue;
      std::vector<std::pair<int, int>> key;
      for (size_t e = 60; e < 70; e += 2)
        key.push_back({std::min(g.edges[e][0], g.edges[e][1]),
                       std::max(g.edges[e][0], g.edges[e][1])});
      std::sort(key.begin(), key.end());
      CHECK(seen.insert(key).second);
    }
    CHECK(seen.size() == 20);
  }
}

TEST_CASE("same seed reproduces byte-identical dataset files") {
  SyntheticSpec spec;
  spec.per_class_count = 3;
  spec.seed = 11;
  const auto p1 = temp_file("mlap_ds_a.jsonl");
  const auto p2 = temp_file("mlap_ds_b.jsonl");
  save_jsonl(gen_synthetic_dataset(spec), p1.string());
  save_jsonl(gen_synthetic_dataset(spec), p2.string());
  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  const std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  const std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(s1 == s2);
  CHECK(!s1.empty());
}

TEST_CASE("stratified split at synthetic scale is exact") {
  SyntheticSpec spec;
  spec.per_class_count = 50;
  spec.seed = 21;
  const auto ds = gen_synthetic_dataset(spec);  // 450 graphs
  SplitSpec split_spec;
  split_spec.seed = 2;
  const SplitIndices idx = split(ds, split_spec);
  CHECK(idx.train.size() == 360);
  CHECK(idx.val.size() == 45);
  CHECK(idx.test.size() == 45);
  std::vector<int> per_class(9, 0);
  for (int i : idx.train) per_class[ds[i].label]++;
  for (int c = 0; c < 9; ++c) CHECK(per_class[c] == 40);

  // disjoint and exhaustive
  std::set<int> all;
  for (int i : idx.train) all.insert(i);
  for (int i : idx.val) all.insert(i);
  for (int i : idx.test) all.insert(i);
  CHECK(all.size() == ds.size());

  SECTION("ratios (1,0,0) put everything in train") {
    SplitSpec everything;
    everything.train = 1;
    everything.val = 0;
    everything.test = 0;
    const SplitIndices e = split(ds, everything);
    CHECK(e.train.size() == ds.size());
    CHECK(e.val.empty());
    CHECK(e.test.empty());
  }

  SECTION("same seed gives identical partitions") {
    const SplitIndices again = split(ds, split_spec);
    CHECK(again.train == idx.train);
    CHECK(again.val == idx.val);
    CHECK(again.test == idx.test);
  }
}

TEST_CASE("batch shifts node indices and tracks segments") {
  RngStream rng(8);
  SECTION("single graph is unchanged") {
    std::vector<GraphInstance> gs{testutil::random_graph(rng, 5)};
    GraphBatch b = batch(gs);
    CHECK(b.num_graphs == 1);
    CHECK(b.node_offsets == std::vector<int>{0});
    for (int s : b.segments) CHECK(s == 0);
    for (size_t e = 0; e < gs[0].edges.size(); ++e) {
      CHECK(b.edge_src[e] == gs[0].edges[e][0]);
      CHECK(b.edge_dst[e] == gs[0].edges[e][1]);
    }
  }
  SECTION("second graph's edges shift by the first graph's node count") {
    RngStream g1rng(1), g2rng(2);
    std::vector<GraphInstance> gs{testutil::random_graph(g1rng, 25),
                                  testutil::random_graph(g2rng, 25)};
    GraphBatch b = batch(gs);
    CHECK(b.node_offsets == std::vector<int>({0, 25}));
    const size_t e0 = gs[0].edges.size();
    for (size_t e = 0; e < gs[1].edges.size(); ++e) {
      CHECK(b.edge_src[e0 + e] == gs[1].edges[e][0] + 25);
      CHECK(b.edge_dst[e0 + e] == gs[1].edges[e][1] + 25);
    }
    CHECK(std::is_sorted(b.segments.begin(), b.segments.end()));
  }
  SECTION("flat node count is the sum of the parts") {
    const auto gs = testutil::random_graphs(rng, 7);
    GraphBatch b = batch(gs);
    int total = 0;
    for (const auto& g : gs) total += g.num_nodes;
    CHECK(b.num_nodes == total);
    CHECK(static_cast<int>(b.segments.size()) == total);
  }
}

TEST_CASE("jsonl round trip and validation") {
  SECTION("save then load is structurally identical") {
    SyntheticSpec spec;
    spec.per_class_count = 2;
    spec.seed = 31;
    const auto ds = gen_synthetic_dataset(spec);
    const auto path = temp_file("mlap_roundtrip.jsonl");
    save_jsonl(ds, path.string());
    const auto back = load_jsonl(path.string());
    REQUIRE(back.size() == ds.size());
    for (size_t i = 0; i < ds.size(); ++i) {
      CHECK(back[i].num_nodes == ds[i].num_nodes);
      CHECK(back[i].edges == ds[i].edges);
      CHECK(back[i].label == ds[i].label);
      CHECK(back[i].node_feats == ds[i].node_feats);
      CHECK(back[i].edge_feats == ds[i].edge_feats);
    }
    // and saving again is byte-identical (canonical writer)
    const auto path2 = temp_file("mlap_roundtrip2.jsonl");
    save_jsonl(back, path2.string());
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    const std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    const std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(s1 == s2);
  }
  SECTION("out-of-range edge index is rejected with the line number") {
    const auto path = temp_file("mlap_bad_edge.jsonl");
    std::ofstream os(path);
    os << R"({"n": 25, "edges": [[0,99]], "nf": [], "ef": [], "y": 0})" << "\n";
    os.close();
    CHECK_THROWS_MATCHES(load_jsonl(path.string()), DataError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring(":1") &&
                             Catch::Matchers::ContainsSubstring("out of range")));
  }
  SECTION("malformed json names the line") {
    const auto path = temp_file("mlap_bad_json.jsonl");
    std::ofstream os(path);
    os << R"({"n": 5, "edges": [[0,1]], "nf": [], "ef": [], "y": 0})" << "\n";
    os << "{not json\n";
    os.close();
    CHECK_THROWS_MATCHES(load_jsonl(path.string()), DataError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring(":2")));
  }
  SECTION("unknown field is rejected") {
    const auto path = temp_file("mlap_extra_field.jsonl");
    std::ofstream os(path);
    os << R"({"n": 2, "edges": [], "nf": [], "ef": [], "y": 0, "zz": 1})" << "\n";
    os.close();
    CHECK_THROWS_AS(load_jsonl(path.string()), DataError);
  }
  SECTION("zero-node graph is rejected") {
    const auto path = temp_file("mlap_zero_nodes.jsonl");
    std::ofstream os(path);
    os << R"({"n": 0, "edges": [], "nf": [], "ef": [], "y": 0})" << "\n";
    os.close();
    CHECK_THROWS_AS(load_jsonl(path.string()), DataError);
  }
  SECTION("empty file loads as an empty dataset") {
    const auto path = temp_file("mlap_empty.jsonl");
    std::ofstream(path).close();
    CHECK(load_jsonl(path.string()).empty());
  }
}

TEST_CASE("batch pooling equals per-graph pooling") {
  // segment sums over a batch match sums computed graph by graph
  RngStream rng(17);
  const auto gs = testutil::random_graphs(rng, 5);
  GraphBatch b = batch(gs);
  Tensor h = testutil::random_tensor(rng, b.num_nodes, 4);
  Tape tape;
  Tensor pooled = tape.segment_sum(h, b.segments, b.num_graphs);
  int row = 0;
  for (size_t gi = 0; gi < gs.size(); ++gi) {
    for (int j = 0; j < 4; ++j) {
      double expect = 0.0;
      for (int n = 0; n < gs[gi].num_nodes; ++n) expect += h.at(row + n, j);
      CHECK(pooled.at(static_cast<int>(gi), j) == Catch::Approx(expect).margin(1e-12));
    }
    row += gs[gi].num_nodes;
  }
}
