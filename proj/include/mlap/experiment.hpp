#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mlap/analysis.hpp"
#include "mlap/model.hpp"
#include "mlap/stats.hpp"
#include "mlap/train.hpp"

namespace mlap {

// Flat key=value experiment description: the model configuration plus
// dataset path, split, output directory and the seeds to run. Unknown keys
// and invalid values are rejected with the line number.
struct ExperimentConfig {
  ModelConfig model;
  std::string data_path;
  std::string out_dir;
  SplitSpec split;
  std::vector<uint64_t> seeds;
};

namespace detail {

inline std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  size_t e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

inline bool parse_bool(const std::string& v, const std::string& where) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(where + ": expected true or false, got \"" + v + "\"");
}

// "1..5" (inclusive range), or a comma list "1,4,9", or a single seed.
inline std::vector<uint64_t> parse_seed_list(const std::string& v, const std::string& where) {
  std::vector<uint64_t> out;
  const size_t dots = v.find("..");
  try {
    if (dots != std::string::npos) {
      const uint64_t lo = std::stoull(v.substr(0, dots));
      const uint64_t hi = std::stoull(v.substr(dots + 2));
      if (hi < lo) throw ConfigError(where + ": empty seed range \"" + v + "\"");
      for (uint64_t s = lo; s <= hi; ++s) out.push_back(s);
      return out;
    }
    std::istringstream is(v);
    std::string tok;
    while (std::getline(is, tok, ',')) out.push_back(std::stoull(trim(tok)));
  } catch (const std::logic_error&) {
    throw ConfigError(where + ": malformed seed list \"" + v + "\"");
  }
  if (out.empty()) throw ConfigError(where + ": empty seed list");
  return out;
}

// "8:1:1" or "8,1,1"
inline void parse_ratios(const std::string& v, SplitSpec& split, const std::string& where) {
  std::string norm = v;
  std::replace(norm.begin(), norm.end(), ':', ',');
  std::istringstream is(norm);
  std::string tok;
  std::vector<int> parts;
  while (std::getline(is, tok, ',')) {
    try {
      parts.push_back(std::stoi(trim(tok)));
    } catch (const std::logic_error&) {
      throw ConfigError(where + ": malformed split ratios \"" + v + "\"");
    }
  }
  if (parts.size() != 3) throw ConfigError(where + ": split ratios need 3 parts, got \"" + v + "\"");
  split.train = parts[0];
  split.val = parts[1];
  split.test = parts[2];
}

}  // namespace detail

inline ExperimentConfig parse_experiment_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("config: cannot open " + path);
  ExperimentConfig cfg;
  cfg.model.aggregator = Aggregator::none;  // must be set explicitly for jk/mlap
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const std::string where = path + ":" + std::to_string(line_no);
    std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    const size_t eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key=value");
    const std::string key = detail::trim(t.substr(0, eq));
    const std::string val = detail::trim(t.substr(eq + 1));
    try {
      if (key == "arch") cfg.model.arch = arch_from_string(val);
      else if (key == "aggregator") cfg.model.aggregator = aggregator_from_string(val);
      else if (key == "layers") cfg.model.layers = std::stoi(val);
      else if (key == "dim") cfg.model.dim = std::stoi(val);
      else if (key == "dropout") cfg.model.dropout = std::stod(val);
      else if (key == "graphnorm") cfg.model.graphnorm = detail::parse_bool(val, where);
      else if (key == "head") cfg.model.head = head_from_string(val);
      else if (key == "num_classes") cfg.model.num_classes = std::stoi(val);
      else if (key == "lr_base") cfg.model.lr_base = std::stod(val);
      else if (key == "lr_decay_factor") cfg.model.lr_decay_factor = std::stod(val);
      else if (key == "lr_decay_every") cfg.model.lr_decay_every = std::stoi(val);
      else if (key == "epochs") cfg.model.epochs = std::stoi(val);
      else if (key == "batch_size") cfg.model.batch_size = std::stoi(val);
      else if (key == "data") cfg.data_path = val;
      else if (key == "out") cfg.out_dir = val;
      else if (key == "split_ratios") detail::parse_ratios(val, cfg.split, where);
      else if (key == "split_seed") cfg.split.seed = std::stoull(val);
      else if (key == "stratified") cfg.split.stratified = detail::parse_bool(val, where);
      else if (key == "seed") cfg.seeds = {std::stoull(val)};
      else if (key == "seeds") cfg.seeds = detail::parse_seed_list(val, where);
      else throw ConfigError(where + ": unknown key \"" + key + "\"");
    } catch (const ConfigError&) {
      throw;
    } catch (const std::logic_error&) {
      throw ConfigError(where + ": malformed value \"" + val + "\" for key \"" + key + "\"");
    }
  }
  if (cfg.seeds.empty()) cfg.seeds = {cfg.model.seed};
  return cfg;
}

// One row of a run's final-metrics CSV; also the unit compare works on.
struct RunRow {
  std::string arch, aggregator, head, metric;
  int layers = 0, dim = 0;
  bool graphnorm = false;
  uint64_t seed = 0;
  double train = 0.0, val = 0.0, test = 0.0;
};

inline constexpr const char* kFinalCsvHeader =
    "arch,aggregator,layers,dim,graphnorm,head,seed,metric,train,val,test";

inline void write_final_csv(const std::string& path, const ModelConfig& cfg,
                            const RunRecord& rec) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("write_final_csv: cannot open " + path + " for writing");
  os << kFinalCsvHeader << "\n"
     << to_string(cfg.arch) << ',' << to_string(cfg.aggregator) << ',' << cfg.layers << ','
     << cfg.dim << ',' << (cfg.graphnorm ? 1 : 0) << ',' << to_string(cfg.head) << ',' << cfg.seed
     << ',' << to_string(rec.metric) << ',' << format_g17(rec.final_train) << ','
     << format_g17(rec.final_val) << ',' << format_g17(rec.final_test) << "\n";
}

inline void write_epochs_csv(const std::string& path, const RunRecord& rec) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("write_epochs_csv: cannot open " + path + " for writing");
  os << "epoch,train_loss,val_metric\n";
  for (size_t e = 0; e < rec.epochs.size(); ++e)
    os << e << ',' << format_g17(rec.epochs[e].train_loss) << ','
       << format_g17(rec.epochs[e].val_metric) << "\n";
}

inline std::vector<RunRow> read_final_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("read_final_csv: cannot open " + path);
  std::string line;
  if (!std::getline(is, line)) throw DataError(path + ": empty run CSV");
  if (detail::trim(line) != kFinalCsvHeader)
    throw DataError(path + ": unexpected header \"" + line + "\"");
  std::vector<RunRow> rows;
  int line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    std::istringstream ls(line);
    std::string tok;
    std::vector<std::string> f;
    while (std::getline(ls, tok, ',')) f.push_back(tok);
    if (f.size() != 11)
      throw DataError(path + ":" + std::to_string(line_no) + ": expected 11 fields");
    RunRow r;
    try {
      r.arch = f[0];
      r.aggregator = f[1];
      r.layers = std::stoi(f[2]);
      r.dim = std::stoi(f[3]);
      r.graphnorm = f[4] == "1";
      r.head = f[5];
      r.seed = std::stoull(f[6]);
      r.metric = f[7];
      r.train = std::stod(f[8]);
      r.val = std::stod(f[9]);
      r.test = std::stod(f[10]);
    } catch (const std::logic_error&) {
      throw DataError(path + ":" + std::to_string(line_no) + ": malformed field");
    }
    rows.push_back(r);
  }
  return rows;
}

// Deterministic name stem encoding the configuration and seed.
inline std::string run_stem(const ModelConfig& cfg, uint64_t seed) {
  std::ostringstream os;
  os << to_string(cfg.arch);
  if (cfg.aggregator != Aggregator::none) os << "-" << to_string(cfg.aggregator);
  os << "_L" << cfg.layers << "_gn" << (cfg.graphnorm ? 1 : 0) << "_seed" << seed;
  return os.str();
}

// Minimal glob over one path pattern; * and ? match within path components.
inline std::vector<std::string> glob_files(const std::string& pattern) {
  namespace fs = std::filesystem;
  const fs::path p(pattern);
  const fs::path dir = p.parent_path().empty() ? fs::path(".") : p.parent_path();
  const std::string name_pat = p.filename().string();
  if (name_pat.find('*') == std::string::npos && name_pat.find('?') == std::string::npos) {
    if (fs::exists(p)) return {pattern};
    return {};
  }
  auto match = [&](const std::string& name) {
    // classic recursive wildcard match
    std::function<bool(size_t, size_t)> rec = [&](size_t i, size_t j) {
      while (i < name_pat.size() && name_pat[i] != '*') {
        if (j >= name.size()) return false;
        if (name_pat[i] != '?' && name_pat[i] != name[j]) return false;
        ++i;
        ++j;
      }
      if (i == name_pat.size()) return j == name.size();
      for (size_t k = j; k <= name.size(); ++k)
        if (rec(i + 1, k)) return true;
      return false;
    };
    return rec(0, 0);
  };
  std::vector<std::string> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && match(entry.path().filename().string()))
      out.push_back(entry.path().string());
  std::sort(out.begin(), out.end());
  return out;
}

// Model selection and pairwise tests over run rows: group by
// (arch, aggregator, layers, graphnorm), pick the best group per
// architecture family by mean validation metric, then test the selected
// multi-level readout group against each selected baseline family on the
// test metrics.
struct CompareRow {
  std::string comparison;
  StatResult stat;
  double p_bonferroni = 1.0;
};

struct CompareOutcome {
  std::map<std::string, std::string> selected;  // family -> group key
  std::vector<CompareRow> rows;
};

namespace detail {

struct Group {
  std::string key;
  std::vector<double> val, test;
};

}  // namespace detail

inline CompareOutcome compare_runs(const std::vector<RunRow>& rows,
                                   const std::vector<std::string>& families) {
  if (rows.empty()) throw DataError("compare: no run rows");
  const std::string metric = rows[0].metric;
  for (const RunRow& r : rows)
    if (r.metric != metric) throw DataError("compare: mixed metrics across runs");
  const bool lower_better = metric_lower_is_better(metric_from_string(metric));

  std::map<std::string, std::map<std::string, detail::Group>> by_family;  // family -> key -> group
  for (const RunRow& r : rows) {
    std::ostringstream key;
    key << r.arch;
    if (r.aggregator != "none") key << "-" << r.aggregator;
    key << "_L" << r.layers << "_gn" << (r.graphnorm ? 1 : 0);
    auto& g = by_family[r.arch][key.str()];
    g.key = key.str();
    g.val.push_back(r.val);
    g.test.push_back(r.test);
  }

  CompareOutcome out;
  std::map<std::string, detail::Group> best;
  for (const std::string& family : families) {
    const auto it = by_family.find(family);
    if (it == by_family.end())
      throw DataError("compare: no runs for architecture family \"" + family + "\"");
    const detail::Group* chosen = nullptr;
    double chosen_mean = 0.0;
    for (const auto& [key, g] : it->second) {
      if (g.val.size() < 2)
        throw DataError("compare: group " + key + " has fewer than 2 runs");
      double mean = 0.0;
      for (double v : g.val) mean += v;
      mean /= static_cast<double>(g.val.size());
      const bool better = !chosen || (lower_better ? mean < chosen_mean : mean > chosen_mean) ||
                          (mean == chosen_mean && key < chosen->key);
      if (better) {
        chosen = &g;
        chosen_mean = mean;
      }
    }
    best[family] = *chosen;
    out.selected[family] = chosen->key;
  }

  if (!best.count("mlap")) throw DataError("compare: families must include mlap");
  std::vector<double> raw_p;
  for (const std::string& family : families) {
    if (family == "mlap") continue;
    CompareRow row;
    row.comparison = "mlap_vs_" + family;
    row.stat = mann_whitney_u(best["mlap"].test, best[family].test);
    out.rows.push_back(row);
    raw_p.push_back(row.stat.p);
  }
  const std::vector<double> adj = bonferroni(raw_p);
  for (size_t i = 0; i < out.rows.size(); ++i) out.rows[i].p_bonferroni = adj[i];
  return out;
}

inline void write_compare_csv(const std::string& path, const CompareOutcome& outcome) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("write_compare_csv: cannot open " + path + " for writing");
  os << "comparison,U,z,p,p_bonferroni,r,n1,n2\n";
  for (const CompareRow& row : outcome.rows)
    os << row.comparison << ',' << format_g17(row.stat.u) << ',' << format_g17(row.stat.z) << ','
       << format_g17(row.stat.p) << ',' << format_g17(row.p_bonferroni) << ','
       << format_g17(row.stat.r) << ',' << row.stat.n1 << ',' << row.stat.n2 << "\n";
}

}  // namespace mlap
