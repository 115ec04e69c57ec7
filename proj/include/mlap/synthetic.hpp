#pragma once

#include <algorithm>
#include <cstdint>
#include <set>
#include <utility>
#include <vector>

#include "mlap/error.hpp"
#include "mlap/graph.hpp"
#include "mlap/rng.hpp"

namespace mlap {

// Compositional benchmark: each graph is one 5-node center component whose
// nodes each anchor a 5-node peripheral component, plus 5 random extra
// edges. The class (9 total) is the pair (center type, peripheral type).
// Graphs carry no node or edge features.

enum class ComponentKind { A = 0, B = 1, C = 2 };

struct SyntheticSpec {
  int per_class_count = 1000;
  int num_random_edges = 5;
  int component_size = 5;
  int num_peripherals = 5;
  uint64_t seed = 0;
};

// Undirected edge pairs of one component on local nodes 0..4: a 4-edge path
// plus one extra edge whose placement distinguishes the kinds by girth
// (A has a triangle, B a 4-cycle, C a 5-cycle).
inline std::vector<std::array<int, 2>> gen_component(ComponentKind kind, int base_index) {
  std::vector<std::array<int, 2>> edges = {{0, 1}, {1, 2}, {2, 3}, {3, 4}};
  switch (kind) {
    case ComponentKind::A: edges.push_back({0, 2}); break;
    case ComponentKind::B: edges.push_back({0, 3}); break;
    case ComponentKind::C: edges.push_back({0, 4}); break;
  }
  for (auto& e : edges) {
    e[0] += base_index;
    e[1] += base_index;
  }
  return edges;
}

namespace detail {

inline std::pair<int, int> canon(int a, int b) { return {std::min(a, b), std::max(a, b)}; }

}  // namespace detail

// Sorted canonical list of the graph's random extra edges; two graphs of
// a class are "unique" iff these differ.
using RandomEdgeKey = std::vector<std::pair<int, int>>;

inline GraphInstance gen_synthetic_graph(ComponentKind center, ComponentKind peripheral,
                                         RngStream& rng, RandomEdgeKey* key_out = nullptr) {
  constexpr int kNodes = 25;
  std::vector<std::array<int, 2>> undirected;
  std::set<std::pair<int, int>> present;
  auto add_undirected = [&](int a, int b) {
    undirected.push_back({a, b});
    present.insert(detail::canon(a, b));
  };

  for (const auto& e : gen_component(center, 0)) add_undirected(e[0], e[1]);
  // Peripheral i reuses center node i as its local node 0; its local nodes
  // 1..4 are 5+4i .. 5+4i+3.
  for (int i = 0; i < 5; ++i) {
    auto map_node = [i](int local) { return local == 0 ? i : 4 + 4 * i + local; };
    for (const auto& e : gen_component(peripheral, 0))
      add_undirected(map_node(e[0]), map_node(e[1]));
  }

  RandomEdgeKey key;
  int attempts = 0;
  while (static_cast<int>(key.size()) < 5) {
    if (++attempts > 100000)
      throw DataError("gen_synthetic_graph: could not place random edges");
    const int a = rng.next_int(kNodes);
    const int b = rng.next_int(kNodes);
    if (a == b) continue;
    const auto c = detail::canon(a, b);
    if (present.count(c)) continue;
    present.insert(c);
    key.push_back(c);
    undirected.push_back({a, b});
  }
  std::sort(key.begin(), key.end());
  if (key_out) *key_out = key;

  GraphInstance g;
  g.num_nodes = kNodes;
  for (const auto& e : undirected) {
    g.edges.push_back({e[0], e[1]});
    g.edges.push_back({e[1], e[0]});
  }
  g.label = 3 * static_cast<int>(center) + static_cast<int>(peripheral);
  return g;
}

inline std::vector<GraphInstance> gen_synthetic_dataset(const SyntheticSpec& spec) {
  if (spec.per_class_count <= 0) throw ConfigError("gen_synthetic_dataset: per_class_count must be positive");
  // 25 nodes give C(25,2)=300 candidate pairs, 30 taken by components; the
  // number of distinct 5-edge extras is astronomically larger than any
  // sane per_class_count, but guard the retry loop anyway.
  std::vector<GraphInstance> dataset;
  dataset.reserve(static_cast<size_t>(spec.per_class_count) * 9);
  RngStream rng = RngStream(spec.seed).substream(0x9E4);
  for (int label = 0; label < 9; ++label) {
    const auto center = static_cast<ComponentKind>(label / 3);
    const auto peripheral = static_cast<ComponentKind>(label % 3);
    std::set<RandomEdgeKey> seen;
    long duplicates = 0;
    while (static_cast<int>(seen.size()) < spec.per_class_count) {
      RandomEdgeKey key;
      GraphInstance g = gen_synthetic_graph(center, peripheral, rng, &key);
      if (!seen.insert(key).second) {
        if (++duplicates > 100L * spec.per_class_count)
          throw DataError("gen_synthetic_dataset: per_class_count exceeds the number of "
                          "distinct random edge sets");
        continue;
      }
      dataset.push_back(std::move(g));
    }
  }
  return dataset;
}

}  // namespace mlap
