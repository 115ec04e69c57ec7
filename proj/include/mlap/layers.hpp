#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "mlap/graph.hpp"
#include "mlap/rng.hpp"
#include "mlap/tensor.hpp"

namespace mlap {

inline void init_uniform(Tensor& t, RngStream& rng, double bound) {
  for (size_t i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(-bound, bound);
}

// Two-layer network x -> relu(x W1 + b1) W2 + b2. Weights are uniform in
// +-1/sqrt(fan_in), biases start at zero.
struct MlpParams {
  Tensor w1, b1, w2, b2;

  static MlpParams init(int in, int hidden, int out, RngStream& rng) {
    MlpParams p;
    p.w1 = Tensor(in, hidden, true);
    p.b1 = Tensor(1, hidden, true);
    p.w2 = Tensor(hidden, out, true);
    p.b2 = Tensor(1, out, true);
    init_uniform(p.w1, rng, 1.0 / std::sqrt(static_cast<double>(in)));
    init_uniform(p.w2, rng, 1.0 / std::sqrt(static_cast<double>(hidden)));
    return p;
  }

  Tensor forward(Tape& tape, const Tensor& x) const {
    Tensor h = tape.relu(tape.broadcast_add_row(tape.matmul(x, w1), b1));
    return tape.broadcast_add_row(tape.matmul(h, w2), b2);
  }

  // Forward pass without tape recording, for oracle-style checks.
  std::vector<double> eval_raw(std::span<const double> row) const {
    std::vector<double> h(w1.cols(), 0.0);
    for (int j = 0; j < w1.cols(); ++j) {
      double acc = b1.at(0, j);
      for (int i = 0; i < w1.rows(); ++i) acc += row[i] * w1.at(i, j);
      h[j] = acc > 0.0 ? acc : 0.0;
    }
    std::vector<double> out(w2.cols(), 0.0);
    for (int j = 0; j < w2.cols(); ++j) {
      double acc = b2.at(0, j);
      for (int i = 0; i < w2.rows(); ++i) acc += h[i] * w2.at(i, j);
      out[j] = acc;
    }
    return out;
  }

  void collect(std::vector<std::pair<std::string, Tensor>>& out, const std::string& prefix) const {
    out.emplace_back(prefix + ".w1", w1);
    out.emplace_back(prefix + ".b1", b1);
    out.emplace_back(prefix + ".w2", w2);
    out.emplace_back(prefix + ".b2", b2);
  }
};

// Encodes categorical feature columns into d-dimensional rows by summing
// one embedding lookup per column. Featureless inputs share a single
// trainable vector instead (zero-initialised features would make the
// first message passing step degenerate).
struct FeatureEncoder {
  int dim = 0;
  Tensor shared_vec;           // used when tables is empty
  std::vector<Tensor> tables;  // one [vocab x dim] table per column

  static FeatureEncoder init(int dim, std::span<const int> vocab_sizes, RngStream& rng) {
    FeatureEncoder enc;
    enc.dim = dim;
    if (vocab_sizes.empty()) {
      enc.shared_vec = Tensor(1, dim, true);
      init_uniform(enc.shared_vec, rng, 0.1);
      return enc;
    }
    for (int v : vocab_sizes) {
      Tensor table(v, dim, true);
      init_uniform(table, rng, 0.1);
      enc.tables.push_back(table);
    }
    return enc;
  }

  // feat_cols[c][i] is the code of row i in column c; count rows out.
  Tensor encode(Tape& tape, const std::vector<std::vector<int>>& feat_cols, int count) const {
    if (tables.empty()) return tape.broadcast_rows(shared_vec, count);
    if (feat_cols.size() != tables.size())
      throw ConfigError("encode: expected " + std::to_string(tables.size()) +
                        " feature columns, got " + std::to_string(feat_cols.size()));
    Tensor out = tape.gather_rows(tables[0], feat_cols[0]);
    for (size_t c = 1; c < tables.size(); ++c)
      out = tape.add(out, tape.gather_rows(tables[c], feat_cols[c]));
    return out;
  }

  void collect(std::vector<std::pair<std::string, Tensor>>& out, const std::string& prefix) const {
    if (tables.empty()) {
      out.emplace_back(prefix + ".shared", shared_vec);
      return;
    }
    for (size_t c = 0; c < tables.size(); ++c)
      out.emplace_back(prefix + ".table" + std::to_string(c), tables[c]);
  }
};

// Per-graph feature normalisation with a learnable mean scale:
//   out = gamma * (h - alpha * mean_g(h)) / sqrt(var_g + eps) + beta
// where var_g is the per-graph mean of the squared centred values.
struct GraphNormParams {
  Tensor alpha, gamma, beta;
  static constexpr double eps_norm = 1e-5;

  static GraphNormParams init(int dim) {
    GraphNormParams p;
    p.alpha = Tensor(1, dim, true);
    p.gamma = Tensor(1, dim, true);
    p.beta = Tensor(1, dim, true);
    p.alpha.fill(1.0);
    p.gamma.fill(1.0);
    return p;
  }

  void collect(std::vector<std::pair<std::string, Tensor>>& out, const std::string& prefix) const {
    out.emplace_back(prefix + ".alpha", alpha);
    out.emplace_back(prefix + ".gamma", gamma);
    out.emplace_back(prefix + ".beta", beta);
  }
};

inline Tensor graphnorm(Tape& tape, const Tensor& h, std::span<const int> segments,
                        int num_graphs, const GraphNormParams& p) {
  Tensor mu = tape.segment_mean(h, segments, num_graphs);
  Tensor mu_rows = tape.gather_rows(mu, segments);
  Tensor centered = tape.sub(h, tape.mul_row(mu_rows, p.alpha));
  Tensor var = tape.segment_mean(tape.hadamard(centered, centered), segments, num_graphs);
  Tensor inv_std_rows = tape.gather_rows(tape.rsqrt_shifted(var, GraphNormParams::eps_norm),
                                         segments);
  Tensor normed = tape.hadamard(centered, inv_std_rows);
  return tape.broadcast_add_row(tape.mul_row(normed, p.gamma), p.beta);
}

// One GIN layer: a trainable self-weight eps, a d -> 2d -> d update network
// and an edge feature encoder.
struct GinLayerParams {
  Tensor eps;  // scalar, starts at 0
  MlpParams mlp;
  FeatureEncoder edge_encoder;
  std::optional<GraphNormParams> norm;

  static GinLayerParams init(int dim, std::span<const int> edge_vocab_sizes, bool graphnorm,
                             RngStream& rng) {
    GinLayerParams p;
    p.eps = Tensor(1, 1, true);
    p.mlp = MlpParams::init(dim, 2 * dim, dim, rng);
    p.edge_encoder = FeatureEncoder::init(dim, edge_vocab_sizes, rng);
    if (graphnorm) p.norm = GraphNormParams::init(dim);
    return p;
  }

  void collect(std::vector<std::pair<std::string, Tensor>>& out, const std::string& prefix) const {
    out.emplace_back(prefix + ".eps", eps);
    mlp.collect(out, prefix + ".mlp");
    edge_encoder.collect(out, prefix + ".edge");
    if (norm) norm->collect(out, prefix + ".norm");
  }
};

// m_n = sum over inbound edges (n' -> n) of relu(h_{n'} + edge_vec).
// Nodes without inbound edges get the zero row.
inline Tensor gin_message(Tape& tape, const Tensor& h_prev, const GraphBatch& b,
                          const FeatureEncoder& edge_enc) {
  Tensor h_src = tape.gather_rows(h_prev, b.edge_src);
  Tensor e = edge_enc.encode(tape, b.edge_feat_cols, b.num_edges());
  Tensor per_edge = tape.relu(tape.add(h_src, e));
  return tape.segment_sum(per_edge, b.edge_dst, b.num_nodes);
}

// h_n = mlp((1 + eps) * h_prev_n + m_n)
inline Tensor gin_update(Tape& tape, const Tensor& h_prev, const Tensor& m,
                         const GinLayerParams& p) {
  Tensor self = tape.add(h_prev, tape.scalar_mul(h_prev, p.eps));
  return p.mlp.forward(tape, tape.add(self, m));
}

struct LayerwiseNodeReps {
  std::vector<Tensor> h;  // h[0] is the encoded input, h[1..L] the layer outputs
  int depth() const { return static_cast<int>(h.size()) - 1; }
};

struct GnnStack {
  FeatureEncoder node_encoder;
  std::vector<GinLayerParams> layers;
  double dropout = 0.5;

  void collect(std::vector<std::pair<std::string, Tensor>>& out) const {
    node_encoder.collect(out, "node_encoder");
    for (size_t l = 0; l < layers.size(); ++l)
      layers[l].collect(out, "layer" + std::to_string(l + 1));
  }
};

inline Tensor encode_nodes(Tape& tape, const GraphBatch& b, const FeatureEncoder& enc) {
  return enc.encode(tape, b.node_feat_cols, b.num_nodes);
}

// Runs the full message passing stack and keeps every per-layer output for
// the readouts. Dropout only draws from rng in train mode.
inline LayerwiseNodeReps forward_stack(Tape& tape, const GraphBatch& b, const GnnStack& stack,
                                       Mode mode, RngStream& dropout_rng) {
  LayerwiseNodeReps reps;
  reps.h.push_back(encode_nodes(tape, b, stack.node_encoder));
  for (const GinLayerParams& layer : stack.layers) {
    Tensor m = gin_message(tape, reps.h.back(), b, layer.edge_encoder);
    Tensor h = gin_update(tape, reps.h.back(), m, layer);
    if (layer.norm) h = graphnorm(tape, h, b.segments, b.num_graphs, *layer.norm);
    h = tape.dropout(h, stack.dropout, mode, dropout_rng);
    reps.h.push_back(h);
  }
  return reps;
}

}  // namespace mlap
