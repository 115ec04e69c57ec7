#pragma once

#include <array>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "mlap/error.hpp"
#include "mlap/rng.hpp"

namespace mlap {

// One graph with categorical features. Undirected source data is stored as
// both directed orientations. Feature matrices may have zero columns.
struct GraphInstance {
  int num_nodes = 0;
  std::vector<std::array<int, 2>> edges;      // directed (src, dst)
  std::vector<std::vector<int>> node_feats;   // [num_nodes][F_n]
  std::vector<std::vector<int>> edge_feats;   // [num_edges][F_e]
  int label = 0;

  int num_edges() const { return static_cast<int>(edges.size()); }
  int node_feature_columns() const {
    return node_feats.empty() ? 0 : static_cast<int>(node_feats[0].size());
  }
  int edge_feature_columns() const {
    return edge_feats.empty() ? 0 : static_cast<int>(edge_feats[0].size());
  }
};

inline void validate_graph(const GraphInstance& g, const std::string& where) {
  if (g.num_nodes <= 0) throw DataError(where + ": graph must have at least one node");
  for (const auto& e : g.edges)
    if (e[0] < 0 || e[0] >= g.num_nodes || e[1] < 0 || e[1] >= g.num_nodes)
      throw DataError(where + ": edge [" + std::to_string(e[0]) + "," + std::to_string(e[1]) +
                      "] out of range for " + std::to_string(g.num_nodes) + " nodes");
  if (!g.node_feats.empty() && static_cast<int>(g.node_feats.size()) != g.num_nodes)
    throw DataError(where + ": node feature row count mismatch");
  if (!g.edge_feats.empty() && g.edge_feats.size() != g.edges.size())
    throw DataError(where + ": edge feature row count mismatch");
  if (g.label < 0) throw DataError(where + ": negative label");
}

// Disjoint union of graphs. Node indices are shifted by cumulative offsets;
// segments maps each flat node to its owning graph and is non-decreasing.
// Feature matrices are stored column-wise for cheap embedding lookups.
struct GraphBatch {
  int num_graphs = 0;
  int num_nodes = 0;
  std::vector<int> node_offsets;
  std::vector<int> edge_src, edge_dst;
  std::vector<int> segments;
  std::vector<int> labels;
  std::vector<std::vector<int>> node_feat_cols;  // [F_n][num_nodes]
  std::vector<std::vector<int>> edge_feat_cols;  // [F_e][num_edges]

  int num_edges() const { return static_cast<int>(edge_src.size()); }
};

inline GraphBatch batch(std::span<const GraphInstance> graphs) {
  GraphBatch b;
  b.num_graphs = static_cast<int>(graphs.size());
  if (graphs.empty()) return b;
  const int fn = graphs[0].node_feature_columns();
  const int fe = graphs[0].edge_feature_columns();
  b.node_feat_cols.resize(fn);
  b.edge_feat_cols.resize(fe);
  int offset = 0;
  for (int gi = 0; gi < b.num_graphs; ++gi) {
    const GraphInstance& g = graphs[gi];
    if (g.node_feature_columns() != fn || g.edge_feature_columns() != fe)
      throw DataError("batch: inconsistent feature column counts across graphs");
    b.node_offsets.push_back(offset);
    for (const auto& e : g.edges) {
      b.edge_src.push_back(e[0] + offset);
      b.edge_dst.push_back(e[1] + offset);
    }
    for (int n = 0; n < g.num_nodes; ++n) {
      b.segments.push_back(gi);
      for (int c = 0; c < fn; ++c) b.node_feat_cols[c].push_back(g.node_feats[n][c]);
    }
    for (size_t e = 0; e < g.edge_feats.size(); ++e)
      for (int c = 0; c < fe; ++c) b.edge_feat_cols[c].push_back(g.edge_feats[e][c]);
    b.labels.push_back(g.label);
    offset += g.num_nodes;
  }
  b.num_nodes = offset;
  return b;
}

// Ratio split, stratified per label by default. The partition is exact and
// disjoint; counts use floor arithmetic with the remainder going to test.
struct SplitSpec {
  int train = 8, val = 1, test = 1;
  bool stratified = true;
  uint64_t seed = 0;
};

struct SplitIndices {
  std::vector<int> train, val, test;
};

namespace detail {

inline void split_block(const std::vector<int>& idx, const SplitSpec& s, SplitIndices& out) {
  const int n = static_cast<int>(idx.size());
  const long total = s.train + s.val + s.test;
  const int n_train = static_cast<int>(static_cast<long>(n) * s.train / total);
  const int n_val = static_cast<int>(static_cast<long>(n) * (s.train + s.val) / total) - n_train;
  for (int i = 0; i < n; ++i) {
    if (i < n_train)
      out.train.push_back(idx[i]);
    else if (i < n_train + n_val)
      out.val.push_back(idx[i]);
    else
      out.test.push_back(idx[i]);
  }
}

}  // namespace detail

inline SplitIndices split(std::span<const GraphInstance> dataset, const SplitSpec& spec) {
  if (spec.train < 0 || spec.val < 0 || spec.test < 0 || spec.train + spec.val + spec.test <= 0)
    throw ConfigError("split: ratios must be nonnegative with a positive sum");
  SplitIndices out;
  RngStream rng = RngStream(spec.seed).substream(0x5157);
  if (!spec.stratified) {
    std::vector<int> idx(dataset.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::vector<int> perm = rng.permutation(static_cast<int>(idx.size()));
    std::vector<int> shuffled(idx.size());
    for (size_t i = 0; i < idx.size(); ++i) shuffled[i] = idx[perm[i]];
    detail::split_block(shuffled, spec, out);
    return out;
  }
  int max_label = 0;
  for (const GraphInstance& g : dataset) max_label = std::max(max_label, g.label);
  for (int c = 0; c <= max_label; ++c) {
    std::vector<int> idx;
    for (size_t i = 0; i < dataset.size(); ++i)
      if (dataset[i].label == c) idx.push_back(static_cast<int>(i));
    if (idx.empty()) continue;
    std::vector<int> perm = rng.permutation(static_cast<int>(idx.size()));
    std::vector<int> shuffled(idx.size());
    for (size_t i = 0; i < idx.size(); ++i) shuffled[i] = idx[perm[i]];
    detail::split_block(shuffled, spec, out);
  }
  return out;
}

inline std::vector<GraphInstance> subset(std::span<const GraphInstance> dataset,
                                         std::span<const int> indices) {
  std::vector<GraphInstance> out;
  out.reserve(indices.size());
  for (int i : indices) out.push_back(dataset[i]);
  return out;
}

}  // namespace mlap
