#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "mlap/layers.hpp"
#include "mlap/tensor.hpp"

namespace mlap {

enum class Aggregator { none, sum, weighted, concat, maxpool };

// Gate network scoring each node row; the softmax of the scores within a
// graph gives that graph's attention weights.
struct AttentionGate {
  MlpParams net;  // in -> hidden -> 1

  static AttentionGate init(int in, int hidden, RngStream& rng) {
    return AttentionGate{MlpParams::init(in, hidden, 1, rng)};
  }

  Tensor scores(Tape& tape, const Tensor& h) const { return net.forward(tape, h); }

  void collect(std::vector<std::pair<std::string, Tensor>>& out, const std::string& prefix) const {
    net.collect(out, prefix);
  }
};

inline Tensor attention_pool(Tape& tape, const Tensor& h, std::span<const int> segments,
                             int num_graphs, const AttentionGate& gate) {
  Tensor s = gate.scores(tape, h);
  return tape.segment_softmax_weighted_sum(h, s, segments, num_graphs);
}

// Final graph representation from the per-layer pooled representations.
// sum: plain sum; weighted: per-layer trainable scalars (w has length L).
inline Tensor mlap_aggregate(Tape& tape, std::span<const Tensor> layer_graph_reps,
                             Aggregator mode, const Tensor* w = nullptr) {
  if (layer_graph_reps.empty()) throw ConfigError("mlap_aggregate: no layer representations");
  if (mode == Aggregator::sum) {
    Tensor acc = layer_graph_reps[0];
    for (size_t l = 1; l < layer_graph_reps.size(); ++l)
      acc = tape.add(acc, layer_graph_reps[l]);
    return acc;
  }
  if (mode == Aggregator::weighted) {
    if (!w || static_cast<size_t>(w->size()) != layer_graph_reps.size())
      throw ConfigError("mlap_aggregate: weighted mode needs one weight per layer");
    Tensor acc = tape.scalar_mul(layer_graph_reps[0], *w, 0);
    for (size_t l = 1; l < layer_graph_reps.size(); ++l)
      acc = tape.add(acc, tape.scalar_mul(layer_graph_reps[l], *w, static_cast<int>(l)));
    return acc;
  }
  throw ConfigError("mlap_aggregate: aggregator must be sum or weighted");
}

// Aggregated per-node representation across layers (the h^(0) row is not
// included). concat widens to L*d columns; sum and maxpool stay at d.
inline Tensor jk_aggregate(Tape& tape, std::span<const Tensor> node_layer_reps, Aggregator mode) {
  if (node_layer_reps.empty()) throw ConfigError("jk_aggregate: no layer representations");
  switch (mode) {
    case Aggregator::sum: {
      Tensor acc = node_layer_reps[0];
      for (size_t l = 1; l < node_layer_reps.size(); ++l)
        acc = tape.add(acc, node_layer_reps[l]);
      return acc;
    }
    case Aggregator::concat:
      return tape.concat_cols(node_layer_reps);
    case Aggregator::maxpool:
      return tape.rowwise_max_over_set(node_layer_reps);
    default:
      throw ConfigError("jk_aggregate: aggregator must be sum, concat or maxpool");
  }
}

inline Tensor jk_readout(Tape& tape, const Tensor& h_jk, std::span<const int> segments,
                         int num_graphs, const AttentionGate& gate) {
  return attention_pool(tape, h_jk, segments, num_graphs, gate);
}

inline Tensor naive_readout(Tape& tape, const Tensor& h_last, std::span<const int> segments,
                            int num_graphs, const AttentionGate& gate) {
  return attention_pool(tape, h_last, segments, num_graphs, gate);
}

// Executable form of the readout equivalence claim: pinning every per-layer
// attention of a sum-aggregated multi-level readout to the weights a JK-Sum
// model would compute reproduces the JK-Sum readout. The left side is
// evaluated with plain loops, the right side through the tape kernels, and
// the max absolute difference is returned (0 within 1e-10 on valid inputs).
inline double mlap_jk_equivalence_check(std::span<const Tensor> node_layer_reps,
                                        std::span<const int> segments, int num_graphs,
                                        const AttentionGate& jk_gate) {
  if (node_layer_reps.empty()) throw ConfigError("mlap_jk_equivalence_check: no layers");
  const int n = node_layer_reps[0].rows();
  const int d = node_layer_reps[0].cols();
  const size_t depth = node_layer_reps.size();

  // Left side: raw-loop evaluation.
  std::vector<double> hsum(static_cast<size_t>(n) * d, 0.0);
  for (const Tensor& h : node_layer_reps)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) hsum[static_cast<size_t>(i) * d + j] += h.at(i, j);

  std::vector<double> score(n, 0.0);
  for (int i = 0; i < n; ++i) {
    std::span<const double> row(&hsum[static_cast<size_t>(i) * d], static_cast<size_t>(d));
    score[i] = jk_gate.net.eval_raw(row)[0];
  }
  std::vector<double> seg_max(num_graphs, -std::numeric_limits<double>::infinity());
  for (int i = 0; i < n; ++i) seg_max[segments[i]] = std::max(seg_max[segments[i]], score[i]);
  std::vector<double> a(n, 0.0), norm(num_graphs, 0.0);
  for (int i = 0; i < n; ++i) {
    a[i] = std::exp(score[i] - seg_max[segments[i]]);
    norm[segments[i]] += a[i];
  }
  for (int i = 0; i < n; ++i) a[i] /= norm[segments[i]];

  std::vector<double> lhs(static_cast<size_t>(num_graphs) * d, 0.0);
  for (size_t l = 0; l < depth; ++l)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j)
        lhs[static_cast<size_t>(segments[i]) * d + j] += a[i] * node_layer_reps[l].at(i, j);

  // Right side: the implementation path.
  Tape tape;
  Tensor h_jk = jk_aggregate(tape, node_layer_reps, Aggregator::sum);
  Tensor rhs = jk_readout(tape, h_jk, segments, num_graphs, jk_gate);

  double max_diff = 0.0;
  for (int g = 0; g < num_graphs; ++g)
    for (int j = 0; j < d; ++j)
      max_diff = std::max(max_diff,
                          std::abs(lhs[static_cast<size_t>(g) * d + j] - rhs.at(g, j)));
  return max_diff;
}

}  // namespace mlap
