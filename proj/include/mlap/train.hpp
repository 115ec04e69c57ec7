#pragma once

#include <chrono>
#include <cmath>
#include <string>
#include <vector>

#include "mlap/graph.hpp"
#include "mlap/model.hpp"
#include "mlap/optim.hpp"

namespace mlap {

enum class MetricKind { error_rate, accuracy, roc_auc };

inline std::string to_string(MetricKind m) {
  switch (m) {
    case MetricKind::error_rate: return "error_rate";
    case MetricKind::accuracy: return "accuracy";
    case MetricKind::roc_auc: return "roc_auc";
  }
  return "?";
}

inline MetricKind metric_from_string(const std::string& s) {
  if (s == "error_rate") return MetricKind::error_rate;
  if (s == "accuracy") return MetricKind::accuracy;
  if (s == "roc_auc") return MetricKind::roc_auc;
  throw ConfigError("unknown metric \"" + s + "\"");
}

inline MetricKind default_metric(HeadKind head) {
  return head == HeadKind::multiclass ? MetricKind::error_rate : MetricKind::roc_auc;
}

// Lower is better only for the error rate.
inline bool metric_lower_is_better(MetricKind m) { return m == MetricKind::error_rate; }

// Step-decayed learning rate: lr_base * factor^floor(epoch / every), with
// epochs counted from 0.
inline double lr_at(int epoch, const ModelConfig& cfg) {
  const int steps = epoch / cfg.lr_decay_every;
  return cfg.lr_base * std::pow(cfg.lr_decay_factor, steps);
}

// Rank-statistic AUC with midranks for ties; exactly the concordant-pair
// count plus half the ties, normalised by n_pos * n_neg.
inline double roc_auc_score(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw UsageError("roc_auc: size mismatch");
  const int n = static_cast<int>(scores.size());
  long n_pos = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) throw DataError("roc_auc: labels must be 0 or 1");
    n_pos += y;
  }
  const long n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw NumericError("roc_auc: undefined when only one class is present");
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return scores[a] < scores[b]; });
  double rank_sum_pos = 0.0;
  int i = 0;
  while (i < n) {
    int j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * ((i + 1) + j);  // ranks are 1-based
    for (int k = i; k < j; ++k)
      if (labels[order[k]] == 1) rank_sum_pos += midrank;
    i = j;
  }
  const double u_pos = rank_sum_pos - 0.5 * static_cast<double>(n_pos) * (n_pos + 1);
  return u_pos / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

namespace detail {

struct EvalAccum {
  long wrong = 0, total = 0;
  std::vector<double> scores;
  std::vector<int> labels;
};

inline void eval_batch(const Model& model, const GraphBatch& b, MetricKind metric,
                       EvalAccum& acc) {
  Tape tape;
  RngStream unused(0);
  Model::Output out = model.forward(tape, b, Mode::eval, unused);
  if (metric == MetricKind::roc_auc) {
    if (model.cfg.head != HeadKind::binary)
      throw ConfigError("evaluate: roc_auc needs a binary head");
    for (int g = 0; g < b.num_graphs; ++g) {
      const double t = out.logits.at(g, 0);
      acc.scores.push_back(t >= 0.0 ? 1.0 / (1.0 + std::exp(-t))
                                    : std::exp(t) / (1.0 + std::exp(t)));
      acc.labels.push_back(b.labels[g]);
    }
    return;
  }
  for (int g = 0; g < b.num_graphs; ++g) {
    int pred = 0;
    if (model.cfg.head == HeadKind::multiclass) {
      double best = out.logits.at(g, 0);
      for (int c = 1; c < out.logits.cols(); ++c)
        if (out.logits.at(g, c) > best) {  // ties stay on the lowest class
          best = out.logits.at(g, c);
          pred = c;
        }
    } else {
      pred = out.logits.at(g, 0) > 0.0 ? 1 : 0;
    }
    acc.total++;
    if (pred != b.labels[g]) acc.wrong++;
  }
}

}  // namespace detail

inline double evaluate(const Model& model, std::span<const GraphInstance> dataset,
                       MetricKind metric, int batch_size) {
  if (dataset.empty()) throw ConfigError("evaluate: empty dataset");
  detail::EvalAccum acc;
  for (size_t start = 0; start < dataset.size(); start += batch_size) {
    const size_t stop = std::min(dataset.size(), start + batch_size);
    GraphBatch b = batch(dataset.subspan(start, stop - start));
    detail::eval_batch(model, b, metric, acc);
  }
  if (metric == MetricKind::roc_auc) return roc_auc_score(acc.scores, acc.labels);
  const double err = static_cast<double>(acc.wrong) / static_cast<double>(acc.total);
  return metric == MetricKind::error_rate ? err : 1.0 - err;
}

struct EpochLog {
  double train_loss = 0.0;
  double val_metric = 0.0;
};

struct RunRecord {
  uint64_t seed = 0;
  MetricKind metric = MetricKind::error_rate;
  std::vector<EpochLog> epochs;
  double final_train = 0.0, final_val = 0.0, final_test = 0.0;
  bool has_test = false;
  double wall_seconds = 0.0;
  std::string checkpoint_path;
};

// Full training run: seeded shuffle per epoch, mini-batches, Adam with the
// step-decayed schedule, per-epoch validation in eval mode. No early
// stopping: the returned parameters are those after the last epoch.
inline std::pair<Model, RunRecord> train(const ModelConfig& cfg,
                                         std::span<const GraphInstance> train_set,
                                         std::span<const GraphInstance> val_set,
                                         std::span<const GraphInstance> test_set = {}) {
  cfg.validate();
  if (train_set.empty() || val_set.empty())
    throw ConfigError("train: train and validation sets must be non-empty");
  const auto t0 = std::chrono::steady_clock::now();

  Model model = Model::build(cfg);
  std::vector<Tensor> params = model.parameters();
  AdamState adam(params);
  RngStream dropout_rng = RngStream(cfg.seed).substream(0xD80);
  const RngStream shuffle_root = RngStream(cfg.seed).substream(0x5480);

  RunRecord rec;
  rec.seed = cfg.seed;
  rec.metric = default_metric(cfg.head);

  const int n = static_cast<int>(train_set.size());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    RngStream shuffle_rng = shuffle_root.substream(static_cast<uint64_t>(epoch));
    std::vector<int> perm = shuffle_rng.permutation(n);
    const double lr = lr_at(epoch, cfg);
    double loss_sum = 0.0;
    int batch_index = 0;
    for (int start = 0; start < n; start += cfg.batch_size, ++batch_index) {
      const int stop = std::min(n, start + cfg.batch_size);
      std::vector<GraphInstance> chunk;
      chunk.reserve(stop - start);
      for (int i = start; i < stop; ++i) chunk.push_back(train_set[perm[i]]);
      GraphBatch b = batch(chunk);
      Tape tape;
      Model::Output out = model.forward(tape, b, Mode::train, dropout_rng);
      Tensor loss = model.loss(tape, out, b.labels);
      const double loss_val = loss.item();
      if (!std::isfinite(loss_val))
        throw NumericError("train: loss diverged (non-finite) at epoch " +
                           std::to_string(epoch) + ", batch " + std::to_string(batch_index));
      tape.backward(loss);
      adam_step(params, adam, lr);
      loss_sum += loss_val * (stop - start);
    }
    EpochLog log;
    log.train_loss = loss_sum / n;
    log.val_metric = evaluate(model, val_set, rec.metric, cfg.batch_size);
    rec.epochs.push_back(log);
  }

  rec.final_train = evaluate(model, train_set, rec.metric, cfg.batch_size);
  rec.final_val = evaluate(model, val_set, rec.metric, cfg.batch_size);
  if (!test_set.empty()) {
    rec.final_test = evaluate(model, test_set, rec.metric, cfg.batch_size);
    rec.has_test = true;
  }
  rec.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {std::move(model), std::move(rec)};
}

}  // namespace mlap
