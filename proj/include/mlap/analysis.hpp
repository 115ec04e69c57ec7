#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "mlap/checkpoint.hpp"
#include "mlap/model.hpp"
#include "mlap/optim.hpp"
#include "mlap/train.hpp"

namespace mlap {

// Doubles are printed with 17 significant digits everywhere a CSV is
// written, so parsing the file back reproduces the exact values.
inline std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Per-layer pooled graph representations plus the aggregated one, for every
// graph of a dataset. Row-major [num_graphs x dim] blocks.
struct EmbeddingDump {
  int num_graphs = 0;
  int dim = 0;
  int num_layers = 0;
  std::vector<std::vector<double>> per_layer;  // [L][G*d]
  std::vector<double> aggregated;              // [G*d]
  std::vector<int> labels;
  std::string split_tag;
};

// Eval-mode extraction; only meaningful for architectures that compute
// layer-wise graph representations.
inline EmbeddingDump extract_embeddings(const Model& model,
                                        std::span<const GraphInstance> dataset,
                                        const std::string& split_tag = "",
                                        int batch_size = 256) {
  if (model.cfg.arch != Arch::mlap)
    throw ConfigError("extract_embeddings: layer-wise graph representations require an "
                      "mlap architecture checkpoint");
  EmbeddingDump dump;
  dump.dim = model.cfg.dim;
  dump.num_layers = model.cfg.layers;
  dump.num_graphs = static_cast<int>(dataset.size());
  dump.split_tag = split_tag;
  dump.per_layer.assign(dump.num_layers, {});
  for (size_t start = 0; start < dataset.size(); start += batch_size) {
    const size_t stop = std::min(dataset.size(), start + batch_size);
    GraphBatch b = batch(dataset.subspan(start, stop - start));
    Tape tape;
    RngStream unused(0);
    Model::Output out = model.forward(tape, b, Mode::eval, unused);
    for (int l = 0; l < dump.num_layers; ++l) {
      const Tensor& t = out.layer_graph_reps[l];
      dump.per_layer[l].insert(dump.per_layer[l].end(), t.data(), t.data() + t.size());
    }
    dump.aggregated.insert(dump.aggregated.end(), out.graph_rep.data(),
                           out.graph_rep.data() + out.graph_rep.size());
    for (int y : b.labels) dump.labels.push_back(y);
  }
  return dump;
}

struct ProbeResult {
  double train_metric = 0.0;
  double test_metric = 0.0;
};

namespace detail {

// Canonical row order: by label, then lexicographically by values. Probe
// results therefore depend only on the multiset of (embedding, label)
// pairs, not on the order rows arrive in.
inline std::vector<int> canonical_order(const std::vector<double>& x, const std::vector<int>& y,
                                        int dim) {
  std::vector<int> order(y.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (y[a] != y[b]) return y[a] < y[b];
    const double* ra = &x[static_cast<size_t>(a) * dim];
    const double* rb = &x[static_cast<size_t>(b) * dim];
    for (int j = 0; j < dim; ++j)
      if (ra[j] != rb[j]) return ra[j] < rb[j];
    return false;
  });
  return order;
}

inline double head_metric(const Tensor& logits, std::span<const int> labels, HeadKind kind) {
  if (kind == HeadKind::binary) {
    std::vector<double> scores(logits.rows());
    for (int i = 0; i < logits.rows(); ++i) scores[i] = logits.at(i, 0);
    std::vector<int> y(labels.begin(), labels.end());
    return roc_auc_score(scores, y);
  }
  long wrong = 0;
  for (int i = 0; i < logits.rows(); ++i) {
    int pred = 0;
    double best = logits.at(i, 0);
    for (int c = 1; c < logits.cols(); ++c)
      if (logits.at(i, c) > best) {
        best = logits.at(i, c);
        pred = c;
      }
    if (pred != labels[i]) ++wrong;
  }
  return static_cast<double>(wrong) / logits.rows();
}

}  // namespace detail

// Trains a fresh linear head on frozen embeddings (Adam, 30 epochs,
// lr 1e-3, batches of 50) and reports the metric on the train and test
// rows: error rate for multiclass heads, ROC-AUC for binary ones.
inline ProbeResult probe_train(const std::vector<double>& train_x, const std::vector<int>& train_y,
                               const std::vector<double>& test_x, const std::vector<int>& test_y,
                               int dim, HeadKind kind, int num_classes, uint64_t seed) {
  if (train_y.empty() || test_y.empty()) throw ConfigError("probe_train: empty split");
  constexpr int kEpochs = 30;
  constexpr double kLr = 1e-3;
  constexpr int kBatch = 50;

  RngStream rng = RngStream(seed).substream(0x9B0);
  MulticlassHead mc;
  BinaryHead bin;
  std::vector<Tensor> params;
  if (kind == HeadKind::multiclass) {
    mc = MulticlassHead::init(num_classes, dim, rng);
    params = {mc.class_embeddings, mc.bias};
  } else {
    bin = BinaryHead::init(dim, rng);
    params = {bin.weight, bin.bias};
  }
  AdamState adam(params);

  const std::vector<int> canon = detail::canonical_order(train_x, train_y, dim);
  const int n = static_cast<int>(train_y.size());
  const RngStream shuffle_root = RngStream(seed).substream(0x9B1);
  for (int epoch = 0; epoch < kEpochs; ++epoch) {
    RngStream shuffle_rng = shuffle_root.substream(static_cast<uint64_t>(epoch));
    const std::vector<int> perm = shuffle_rng.permutation(n);
    for (int start = 0; start < n; start += kBatch) {
      const int stop = std::min(n, start + kBatch);
      Tensor x(stop - start, dim);
      std::vector<int> y(stop - start);
      for (int i = start; i < stop; ++i) {
        const int row = canon[perm[i]];
        std::copy_n(&train_x[static_cast<size_t>(row) * dim], dim,
                    x.data() + static_cast<size_t>(i - start) * dim);
        y[i - start] = train_y[row];
      }
      Tape tape;
      Tensor logits = kind == HeadKind::multiclass ? mc.logits(tape, x) : bin.logits(tape, x);
      Tensor loss = kind == HeadKind::multiclass
                        ? tape.softmax_cross_entropy(logits, y)
                        : tape.binary_cross_entropy_logits(logits, y);
      tape.backward(loss);
      adam_step(params, adam, kLr);
    }
  }

  auto eval_rows = [&](const std::vector<double>& x, const std::vector<int>& y) {
    const int rows = static_cast<int>(y.size());
    Tensor xt(rows, dim);
    std::copy(x.begin(), x.end(), xt.data());
    Tape tape;
    Tensor logits = kind == HeadKind::multiclass ? mc.logits(tape, xt) : bin.logits(tape, xt);
    return detail::head_metric(logits, y, kind);
  };
  ProbeResult res;
  res.train_metric = eval_rows(train_x, train_y);
  res.test_metric = eval_rows(test_x, test_y);
  return res;
}

enum class ProbeTask { full, center, peripheral };

inline ProbeTask probe_task_from_string(const std::string& s) {
  if (s == "full") return ProbeTask::full;
  if (s == "center") return ProbeTask::center;
  if (s == "peripheral") return ProbeTask::peripheral;
  throw ConfigError("unknown probe task \"" + s + "\" (expected full|center|peripheral)");
}

struct ProbeSuiteResult {
  std::vector<ProbeResult> per_layer;
  ProbeResult aggregated;
  int num_classes = 0;
};

// Probes every layer-wise representation plus the aggregated one. The
// center/peripheral tasks remap the 9 synthetic labels (label = 3*center +
// peripheral) onto their two 3-class factors.
inline ProbeSuiteResult probe_suite(const EmbeddingDump& train_dump,
                                    const EmbeddingDump& test_dump, ProbeTask task,
                                    uint64_t seed, HeadKind kind = HeadKind::multiclass) {
  if (train_dump.num_layers != test_dump.num_layers || train_dump.dim != test_dump.dim)
    throw ConfigError("probe_suite: train/test dumps disagree on shape");
  auto remap = [&](const std::vector<int>& labels) {
    std::vector<int> out(labels.size());
    for (size_t i = 0; i < labels.size(); ++i) {
      switch (task) {
        case ProbeTask::full: out[i] = labels[i]; break;
        case ProbeTask::center: out[i] = labels[i] / 3; break;
        case ProbeTask::peripheral: out[i] = labels[i] % 3; break;
      }
    }
    return out;
  };
  const std::vector<int> train_y = remap(train_dump.labels);
  const std::vector<int> test_y = remap(test_dump.labels);
  int num_classes = 2;
  if (kind == HeadKind::multiclass) {
    num_classes = 0;
    for (int y : train_y) num_classes = std::max(num_classes, y + 1);
    for (int y : test_y) num_classes = std::max(num_classes, y + 1);
  }

  ProbeSuiteResult res;
  res.num_classes = num_classes;
  for (int l = 0; l < train_dump.num_layers; ++l)
    res.per_layer.push_back(probe_train(train_dump.per_layer[l], train_y,
                                        test_dump.per_layer[l], test_y, train_dump.dim, kind,
                                        num_classes, RngStream(seed).substream(l).seed()));
  res.aggregated = probe_train(train_dump.aggregated, train_y, test_dump.aggregated, test_y,
                               train_dump.dim, kind, num_classes,
                               RngStream(seed).substream(0xA66).seed());
  return res;
}

// CSV: header layer,label,f0..f{d-1}; one row per graph per layer with
// layer in {1..L, "agg"}. Row count is G*(L+1).
inline void export_embeddings_csv(const EmbeddingDump& dump, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("export_embeddings_csv: cannot open " + path + " for writing");
  os << "layer,label";
  for (int j = 0; j < dump.dim; ++j) os << ",f" << j;
  os << "\n";
  auto write_block = [&](const std::string& tag, const std::vector<double>& block) {
    for (int g = 0; g < dump.num_graphs; ++g) {
      os << tag << ',' << dump.labels[g];
      for (int j = 0; j < dump.dim; ++j)
        os << ',' << format_g17(block[static_cast<size_t>(g) * dump.dim + j]);
      os << "\n";
    }
  };
  for (int l = 0; l < dump.num_layers; ++l) write_block(std::to_string(l + 1), dump.per_layer[l]);
  write_block("agg", dump.aggregated);
}

// Per-layer aggregation weights of a model. Sum aggregation has no trained
// weights; the export then carries the implied all-ones vector and is
// flagged not applicable.
struct MlapWeightExport {
  bool applicable = false;
  std::vector<double> weights;
};

inline MlapWeightExport export_mlap_weights(const Model& model) {
  if (model.cfg.arch != Arch::mlap)
    throw ConfigError("export_mlap_weights: model has no layer aggregation weights");
  MlapWeightExport out;
  if (model.cfg.aggregator == Aggregator::weighted) {
    out.applicable = true;
    out.weights.assign(model.agg_weights.data(), model.agg_weights.data() + model.agg_weights.size());
  } else {
    out.applicable = false;
    out.weights.assign(model.cfg.layers, 1.0);
  }
  return out;
}

inline void write_weights_csv(const MlapWeightExport& w, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("write_weights_csv: cannot open " + path + " for writing");
  os << "layer,weight\n";
  for (size_t l = 0; l < w.weights.size(); ++l)
    os << (l + 1) << ',' << format_g17(w.weights[l]) << "\n";
}

}  // namespace mlap
