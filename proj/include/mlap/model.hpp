#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mlap/graph.hpp"
#include "mlap/layers.hpp"
#include "mlap/pooling.hpp"

namespace mlap {

enum class Arch { naive, jk, mlap };
enum class HeadKind { multiclass, binary };

inline std::string to_string(Arch a) {
  switch (a) {
    case Arch::naive: return "naive";
    case Arch::jk: return "jk";
    case Arch::mlap: return "mlap";
  }
  return "?";
}

inline std::string to_string(Aggregator a) {
  switch (a) {
    case Aggregator::none: return "none";
    case Aggregator::sum: return "sum";
    case Aggregator::weighted: return "weighted";
    case Aggregator::concat: return "concat";
    case Aggregator::maxpool: return "maxpool";
  }
  return "?";
}

inline std::string to_string(HeadKind h) {
  return h == HeadKind::multiclass ? "multiclass" : "binary";
}

inline Arch arch_from_string(const std::string& s) {
  if (s == "naive") return Arch::naive;
  if (s == "jk") return Arch::jk;
  if (s == "mlap") return Arch::mlap;
  throw ConfigError("unknown arch \"" + s + "\" (expected naive|jk|mlap)");
}

inline Aggregator aggregator_from_string(const std::string& s) {
  if (s == "none") return Aggregator::none;
  if (s == "sum") return Aggregator::sum;
  if (s == "weighted") return Aggregator::weighted;
  if (s == "concat") return Aggregator::concat;
  if (s == "maxpool") return Aggregator::maxpool;
  throw ConfigError("unknown aggregator \"" + s + "\"");
}

inline HeadKind head_from_string(const std::string& s) {
  if (s == "multiclass") return HeadKind::multiclass;
  if (s == "binary") return HeadKind::binary;
  throw ConfigError("unknown head \"" + s + "\" (expected multiclass|binary)");
}

// Everything needed to rebuild a model and its training schedule. Vocab
// sizes come from a dataset scan and travel with the config so checkpoints
// are self-describing.
struct ModelConfig {
  Arch arch = Arch::mlap;
  Aggregator aggregator = Aggregator::sum;
  int layers = 5;
  int dim = 200;
  double dropout = 0.5;
  bool graphnorm = false;
  HeadKind head = HeadKind::multiclass;
  int num_classes = 9;
  double lr_base = 1e-3;
  double lr_decay_factor = 0.2;
  int lr_decay_every = 15;
  int epochs = 65;
  int batch_size = 50;
  uint64_t seed = 0;
  std::vector<int> node_vocab_sizes;  // empty => featureless, shared vector
  std::vector<int> edge_vocab_sizes;

  void validate() const {
    if (layers < 1 || layers > 10) throw ConfigError("config: layers must be in 1..10");
    if (dim < 1) throw ConfigError("config: dim must be positive");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("config: dropout must be in [0, 1)");
    if (arch == Arch::naive && aggregator != Aggregator::none)
      throw ConfigError("config: naive architecture takes no aggregator");
    if (arch == Arch::mlap && aggregator != Aggregator::sum && aggregator != Aggregator::weighted)
      throw ConfigError("config: mlap aggregator must be sum or weighted");
    if (arch == Arch::jk && aggregator != Aggregator::sum && aggregator != Aggregator::concat &&
        aggregator != Aggregator::maxpool)
      throw ConfigError("config: jk aggregator must be sum, concat or maxpool");
    if (head == HeadKind::multiclass && num_classes < 2)
      throw ConfigError("config: multiclass head needs at least 2 classes");
    if (epochs < 0) throw ConfigError("config: epochs must be nonnegative");
    if (batch_size < 1) throw ConfigError("config: batch_size must be positive");
    if (lr_base <= 0.0) throw ConfigError("config: lr_base must be positive");
    if (lr_decay_every < 1) throw ConfigError("config: lr_decay_every must be positive");
  }

  // Width of the graph representation fed to the head.
  int head_input_dim() const {
    return (arch == Arch::jk && aggregator == Aggregator::concat) ? layers * dim : dim;
  }
};

// Class embedding matrix head: logits = h_G E^T + b.
struct MulticlassHead {
  Tensor class_embeddings;  // [C x in]
  Tensor bias;              // [1 x C]

  static MulticlassHead init(int num_classes, int in, RngStream& rng) {
    MulticlassHead h;
    h.class_embeddings = Tensor(num_classes, in, true);
    h.bias = Tensor(1, num_classes, true);
    init_uniform(h.class_embeddings, rng, 1.0 / std::sqrt(static_cast<double>(in)));
    return h;
  }

  Tensor logits(Tape& tape, const Tensor& h_g) const {
    return tape.broadcast_add_row(tape.matmul_nt(h_g, class_embeddings), bias);
  }

  void collect(std::vector<std::pair<std::string, Tensor>>& out, const std::string& prefix) const {
    out.emplace_back(prefix + ".E", class_embeddings);
    out.emplace_back(prefix + ".b", bias);
  }
};

inline Tensor multiclass_probs(Tape& tape, const Tensor& h_g, const MulticlassHead& head) {
  return tape.row_softmax(head.logits(tape, h_g));
}

// Linear + sigmoid head for binary tasks.
struct BinaryHead {
  Tensor weight;  // [in x 1]
  Tensor bias;    // [1 x 1]

  static BinaryHead init(int in, RngStream& rng) {
    BinaryHead h;
    h.weight = Tensor(in, 1, true);
    h.bias = Tensor(1, 1, true);
    init_uniform(h.weight, rng, 1.0 / std::sqrt(static_cast<double>(in)));
    return h;
  }

  Tensor logits(Tape& tape, const Tensor& h_g) const {
    return tape.broadcast_add_row(tape.matmul(h_g, weight), bias);
  }

  void collect(std::vector<std::pair<std::string, Tensor>>& out, const std::string& prefix) const {
    out.emplace_back(prefix + ".w", weight);
    out.emplace_back(prefix + ".b", bias);
  }
};

inline Tensor binary_prob(Tape& tape, const Tensor& h_g, const BinaryHead& head) {
  return tape.sigmoid(head.logits(tape, h_g));
}

// A configured GNN classifier: encoder + GIN stack + readout + head.
// Parameter initialisation order is fixed (encoder, layers, gates, head)
// so that architectures sharing a prefix of that order draw identical
// values from identical seeds.
class Model {
 public:
  ModelConfig cfg;
  GnnStack stack;
  std::vector<AttentionGate> gates;  // one for naive/jk, one per layer for mlap
  Tensor agg_weights;                // mlap-weighted only, starts at all-ones
  MulticlassHead multiclass_head;
  BinaryHead binary_head;

  static Model build(const ModelConfig& cfg) {
    cfg.validate();
    Model m;
    m.cfg = cfg;
    RngStream rng = RngStream(cfg.seed).substream(0x1417);
    m.stack.dropout = cfg.dropout;
    m.stack.node_encoder = FeatureEncoder::init(cfg.dim, cfg.node_vocab_sizes, rng);
    for (int l = 0; l < cfg.layers; ++l)
      m.stack.layers.push_back(
          GinLayerParams::init(cfg.dim, cfg.edge_vocab_sizes, cfg.graphnorm, rng));
    const int gate_in = cfg.head_input_dim();
    if (cfg.arch == Arch::mlap) {
      for (int l = 0; l < cfg.layers; ++l)
        m.gates.push_back(AttentionGate::init(cfg.dim, cfg.dim, rng));
      if (cfg.aggregator == Aggregator::weighted) {
        m.agg_weights = Tensor(1, cfg.layers, true);
        m.agg_weights.fill(1.0);  // starts exactly at the sum aggregator
      }
    } else {
      m.gates.push_back(AttentionGate::init(gate_in, cfg.dim, rng));
    }
    if (cfg.head == HeadKind::multiclass)
      m.multiclass_head = MulticlassHead::init(cfg.num_classes, gate_in, rng);
    else
      m.binary_head = BinaryHead::init(gate_in, rng);
    return m;
  }

  struct Output {
    LayerwiseNodeReps node_reps;
    std::vector<Tensor> layer_graph_reps;  // mlap only
    Tensor graph_rep;
    Tensor logits;
  };

  Output forward(Tape& tape, const GraphBatch& b, Mode mode, RngStream& dropout_rng) const {
    Output out;
    out.node_reps = forward_stack(tape, b, stack, mode, dropout_rng);
    std::span<const Tensor> layer_reps(out.node_reps.h.data() + 1, cfg.layers);
    switch (cfg.arch) {
      case Arch::naive:
        out.graph_rep = naive_readout(tape, layer_reps.back(), b.segments, b.num_graphs, gates[0]);
        break;
      case Arch::jk: {
        Tensor h_jk = jk_aggregate(tape, layer_reps, cfg.aggregator);
        out.graph_rep = jk_readout(tape, h_jk, b.segments, b.num_graphs, gates[0]);
        break;
      }
      case Arch::mlap: {
        for (int l = 0; l < cfg.layers; ++l)
          out.layer_graph_reps.push_back(
              attention_pool(tape, layer_reps[l], b.segments, b.num_graphs, gates[l]));
        out.graph_rep = mlap_aggregate(tape, out.layer_graph_reps, cfg.aggregator,
                                       agg_weights.defined() ? &agg_weights : nullptr);
        break;
      }
    }
    out.logits = cfg.head == HeadKind::multiclass ? multiclass_head.logits(tape, out.graph_rep)
                                                  : binary_head.logits(tape, out.graph_rep);
    return out;
  }

  Tensor loss(Tape& tape, const Output& out, std::span<const int> labels) const {
    return cfg.head == HeadKind::multiclass
               ? tape.softmax_cross_entropy(out.logits, labels)
               : tape.binary_cross_entropy_logits(out.logits, labels);
  }

  std::vector<std::pair<std::string, Tensor>> named_parameters() const {
    std::vector<std::pair<std::string, Tensor>> out;
    stack.collect(out);
    for (size_t i = 0; i < gates.size(); ++i)
      gates[i].collect(out, "gate" + std::to_string(i));
    if (agg_weights.defined()) out.emplace_back("agg.w", agg_weights);
    if (cfg.head == HeadKind::multiclass)
      multiclass_head.collect(out, "head");
    else
      binary_head.collect(out, "head");
    return out;
  }

  std::vector<Tensor> parameters() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : named_parameters()) out.push_back(t);
    return out;
  }
};

}  // namespace mlap
