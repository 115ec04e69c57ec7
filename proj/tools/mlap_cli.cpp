// Command line front end: dataset generation, training, evaluation,
// layer-wise probing, run comparison and embedding/weight export.
// Every command is deterministic given its flags; seeds always come from
// flags or config files, never from the clock.

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "mlap/analysis.hpp"
#include "mlap/checkpoint.hpp"
#include "mlap/dataset_io.hpp"
#include "mlap/experiment.hpp"
#include "mlap/synthetic.hpp"
#include "mlap/train.hpp"

namespace {

using namespace mlap;

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitIo = 4;

int worker_cap() {
  if (const char* env = std::getenv("MLAP_NUM_WORKERS")) {
    const int v = std::atoi(env);
    if (v >= 1) return v;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Scan a dataset for the vocabulary of every categorical column so the
// model's embedding tables can be sized.
void fill_vocab_sizes(ModelConfig& cfg, std::span<const GraphInstance> dataset) {
  cfg.node_vocab_sizes.clear();
  cfg.edge_vocab_sizes.clear();
  if (dataset.empty()) return;
  cfg.node_vocab_sizes.assign(dataset[0].node_feature_columns(), 1);
  cfg.edge_vocab_sizes.assign(dataset[0].edge_feature_columns(), 1);
  for (const GraphInstance& g : dataset) {
    for (const auto& row : g.node_feats)
      for (size_t c = 0; c < row.size(); ++c) {
        if (row[c] < 0) throw DataError("negative node feature code");
        cfg.node_vocab_sizes[c] = std::max(cfg.node_vocab_sizes[c], row[c] + 1);
      }
    for (const auto& row : g.edge_feats)
      for (size_t c = 0; c < row.size(); ++c) {
        if (row[c] < 0) throw DataError("negative edge feature code");
        cfg.edge_vocab_sizes[c] = std::max(cfg.edge_vocab_sizes[c], row[c] + 1);
      }
  }
}

int cmd_gen_data(int per_class, uint64_t seed, const std::string& out) {
  SyntheticSpec spec;
  spec.per_class_count = per_class;
  spec.seed = seed;
  const std::vector<GraphInstance> dataset = gen_synthetic_dataset(spec);
  save_jsonl(dataset, out);
  std::vector<int> counts(9, 0);
  for (const GraphInstance& g : dataset) counts[g.label]++;
  write_manifest(out + ".manifest.json", spec, counts);
  std::cerr << "wrote " << dataset.size() << " graphs to " << out << "\n";
  return 0;
}

struct SeedOutputs {
  std::string epochs_csv, final_csv, checkpoint;
};

SeedOutputs run_one_seed(const ExperimentConfig& exp, std::span<const GraphInstance> train_set,
                         std::span<const GraphInstance> val_set,
                         std::span<const GraphInstance> test_set, uint64_t seed) {
  ModelConfig cfg = exp.model;
  cfg.seed = seed;
  auto [model, rec] = train(cfg, train_set, val_set, test_set);
  const std::string stem = (std::filesystem::path(exp.out_dir) / run_stem(cfg, seed)).string();
  SeedOutputs files{stem + "_epochs.csv", stem + "_final.csv", stem + ".ckpt"};
  write_epochs_csv(files.epochs_csv, rec);
  write_final_csv(files.final_csv, cfg, rec);
  checkpoint_save(model, files.checkpoint);
  std::cerr << "seed " << seed << ": val " << to_string(rec.metric) << " = " << rec.final_val
            << " (" << rec.wall_seconds << "s)\n";
  return files;
}

int cmd_train(const std::string& config_path, std::optional<uint64_t> seed_override,
              const std::string& seeds_override, const std::string& out_override) {
  ExperimentConfig exp = parse_experiment_config(config_path);
  if (seed_override) exp.seeds = {*seed_override};
  if (!seeds_override.empty())
    exp.seeds = detail::parse_seed_list(seeds_override, "--seeds");
  if (!out_override.empty()) exp.out_dir = out_override;
  if (exp.data_path.empty()) throw ConfigError("config: missing data path (key \"data\")");
  if (exp.out_dir.empty()) throw ConfigError("config: missing output directory (key \"out\")");
  exp.model.validate();

  const std::vector<GraphInstance> dataset = load_jsonl(exp.data_path);
  if (dataset.empty()) throw DataError(exp.data_path + ": dataset is empty");
  fill_vocab_sizes(exp.model, dataset);
  const SplitIndices idx = split(dataset, exp.split);
  const std::vector<GraphInstance> train_set = subset(dataset, idx.train);
  const std::vector<GraphInstance> val_set = subset(dataset, idx.val);
  const std::vector<GraphInstance> test_set = subset(dataset, idx.test);
  std::filesystem::create_directories(exp.out_dir);

  // Seeds run as isolated workers sharing only the immutable dataset.
  const int workers = std::min<int>(worker_cap(), static_cast<int>(exp.seeds.size()));
  std::atomic<size_t> next{0};
  std::vector<std::exception_ptr> errors(exp.seeds.size());
  auto work = [&]() {
    for (;;) {
      const size_t k = next.fetch_add(1);
      if (k >= exp.seeds.size()) return;
      try {
        run_one_seed(exp, train_set, val_set, test_set, exp.seeds[k]);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (size_t k = 0; k < exp.seeds.size(); ++k)
    if (errors[k]) std::rethrow_exception(errors[k]);
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data, std::string metric_name,
             const std::string& out) {
  Model model = checkpoint_load(ckpt);
  const std::vector<GraphInstance> dataset = load_jsonl(data);
  if (metric_name.empty()) metric_name = to_string(default_metric(model.cfg.head));
  const MetricKind metric = metric_from_string(metric_name);
  const double value = evaluate(model, dataset, metric, model.cfg.batch_size);
  std::ostringstream os;
  os << "metric,value\n" << metric_name << ',' << format_g17(value) << "\n";
  if (out.empty()) {
    std::cout << os.str();
  } else {
    std::ofstream f(out, std::ios::binary);
    if (!f) throw IoError("eval: cannot open " + out + " for writing");
    f << os.str();
  }
  return 0;
}

int cmd_probe(const std::string& ckpt, const std::string& data, const std::string& task_name,
              const std::string& ratios, uint64_t split_seed, uint64_t probe_seed,
              const std::string& out) {
  Model model = checkpoint_load(ckpt);
  const ProbeTask task = probe_task_from_string(task_name);
  const std::vector<GraphInstance> dataset = load_jsonl(data);
  SplitSpec spec;
  spec.seed = split_seed;
  detail::parse_ratios(ratios, spec, "--split-ratios");
  const SplitIndices idx = split(dataset, spec);
  const std::vector<GraphInstance> train_set = subset(dataset, idx.train);
  const std::vector<GraphInstance> test_set = subset(dataset, idx.test);
  const EmbeddingDump train_dump = extract_embeddings(model, train_set, "train");
  const EmbeddingDump test_dump = extract_embeddings(model, test_set, "test");
  const HeadKind kind = model.cfg.head;
  const ProbeSuiteResult res = probe_suite(train_dump, test_dump, task, probe_seed, kind);

  std::ostringstream os;
  os << "split";
  for (int l = 1; l <= train_dump.num_layers; ++l) os << ",layer_" << l;
  os << ",agg\n";
  os << "train";
  for (const ProbeResult& p : res.per_layer) os << ',' << format_g17(p.train_metric);
  os << ',' << format_g17(res.aggregated.train_metric) << "\ntest";
  for (const ProbeResult& p : res.per_layer) os << ',' << format_g17(p.test_metric);
  os << ',' << format_g17(res.aggregated.test_metric) << "\n";
  if (out.empty()) {
    std::cout << os.str();
  } else {
    std::ofstream f(out, std::ios::binary);
    if (!f) throw IoError("probe: cannot open " + out + " for writing");
    f << os.str();
  }
  return 0;
}

int cmd_compare(const std::string& runs_glob, const std::string& groups, const std::string& out) {
  std::vector<std::string> files = glob_files(runs_glob);
  if (files.empty()) throw IoError("compare: no files match " + runs_glob);
  std::vector<RunRow> rows;
  for (const std::string& f : files)
    for (const RunRow& r : read_final_csv(f)) rows.push_back(r);
  std::vector<std::string> families;
  std::istringstream gs(groups);
  std::string tok;
  while (std::getline(gs, tok, ',')) families.push_back(detail::trim(tok));
  const CompareOutcome outcome = compare_runs(rows, families);
  for (const auto& [family, key] : outcome.selected)
    std::cerr << "selected " << family << ": " << key << "\n";
  write_compare_csv(out, outcome);
  return 0;
}

int cmd_export(const std::string& ckpt, const std::string& data, const std::string& what,
               const std::string& out) {
  Model model = checkpoint_load(ckpt);
  if (what == "weights") {
    const MlapWeightExport w = export_mlap_weights(model);
    if (!w.applicable)
      std::cerr << "note: sum aggregation has no trained layer weights; "
                   "writing the implied all-ones vector\n";
    write_weights_csv(w, out);
    return 0;
  }
  if (what == "embeddings") {
    const std::vector<GraphInstance> dataset = load_jsonl(data);
    const EmbeddingDump dump = extract_embeddings(model, dataset, "all");
    export_embeddings_csv(dump, out);
    return 0;
  }
  throw ConfigError("export: --what must be embeddings or weights");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Graph classification with layer-wise attention readouts"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic compositional dataset");
  int per_class = 1000;
  uint64_t gen_seed = 0;
  std::string gen_out;
  gen->add_option("--per-class", per_class, "Graphs per class (9 classes)");
  gen->add_option("--seed", gen_seed, "Generator seed");
  gen->add_option("--out", gen_out, "Output JSONL path")->required();

  auto* tr = app.add_subcommand("train", "Train one configuration over one or more seeds");
  std::string config_path, seeds_spec, out_dir;
  std::optional<uint64_t> seed_opt;
  uint64_t seed_val = 0;
  bool seed_given = false;
  tr->add_option("--config", config_path, "Experiment config file")->required();
  tr->add_option("--seed", seed_val, "Single seed override")->each([&](const std::string&) {
    seed_given = true;
  });
  tr->add_option("--seeds", seeds_spec, "Seed list override, e.g. 1..3 or 1,5,9");
  tr->add_option("--out", out_dir, "Output directory override");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  std::string ev_ckpt, ev_data, ev_metric, ev_out;
  ev->add_option("--checkpoint", ev_ckpt)->required();
  ev->add_option("--data", ev_data)->required();
  ev->add_option("--metric", ev_metric, "error_rate|accuracy|roc_auc (default from head)");
  ev->add_option("--out", ev_out, "Write CSV here instead of stdout");

  auto* pr = app.add_subcommand("probe", "Train probes on layer-wise graph representations");
  std::string pr_ckpt, pr_data, pr_task = "full", pr_ratios = "8:1:1", pr_out;
  uint64_t pr_split_seed = 0, pr_seed = 0;
  pr->add_option("--checkpoint", pr_ckpt)->required();
  pr->add_option("--data", pr_data)->required();
  pr->add_option("--task", pr_task, "full|center|peripheral");
  pr->add_option("--split-ratios", pr_ratios, "Train:val:test ratios (must match training)");
  pr->add_option("--split-seed", pr_split_seed, "Split seed (must match training)");
  pr->add_option("--probe-seed", pr_seed, "Probe head initialisation seed");
  pr->add_option("--out", pr_out, "Write CSV here instead of stdout");

  auto* cp = app.add_subcommand("compare", "Select best configs per family and run rank tests");
  std::string cp_glob, cp_groups = "naive,jk,mlap", cp_out;
  cp->add_option("--runs-glob", cp_glob, "Glob over *_final.csv files")->required();
  cp->add_option("--groups", cp_groups, "Architecture families to compare");
  cp->add_option("--out", cp_out, "Output CSV")->required();

  auto* ex = app.add_subcommand("export", "Export embeddings or aggregation weights");
  std::string ex_ckpt, ex_data, ex_what, ex_out;
  ex->add_option("--checkpoint", ex_ckpt)->required();
  ex->add_option("--data", ex_data, "Dataset (embeddings export only)");
  ex->add_option("--what", ex_what, "embeddings|weights")->required();
  ex->add_option("--out", ex_out, "Output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(per_class, gen_seed, gen_out);
    if (tr->parsed()) {
      if (seed_given) seed_opt = seed_val;
      return cmd_train(config_path, seed_opt, seeds_spec, out_dir);
    }
    if (ev->parsed()) return cmd_eval(ev_ckpt, ev_data, ev_metric, ev_out);
    if (pr->parsed())
      return cmd_probe(pr_ckpt, pr_data, pr_task, pr_ratios, pr_split_seed, pr_seed, pr_out);
    if (cp->parsed()) return cmd_compare(cp_glob, cp_groups, cp_out);
    if (ex->parsed()) return cmd_export(ex_ckpt, ex_data, ex_what, ex_out);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
  return 0;
}
