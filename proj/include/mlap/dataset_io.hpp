#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mlap/error.hpp"
#include "mlap/graph.hpp"
#include "mlap/synthetic.hpp"

namespace mlap {

// Dataset file format: UTF-8 JSON lines, one graph per line, fixed field
// order so regenerated files are byte-identical:
//   {"n": <int>, "edges": [[src,dst],...], "nf": [...], "ef": [...], "y": <int>}
// Directed edges are listed explicitly. Writing is done by hand instead of
// through a JSON library to keep the byte layout stable.

namespace detail {

inline void write_int_matrix(std::ostream& os, const std::vector<std::vector<int>>& m) {
  os << '[';
  for (size_t i = 0; i < m.size(); ++i) {
    if (i) os << ',';
    os << '[';
    for (size_t j = 0; j < m[i].size(); ++j) {
      if (j) os << ',';
      os << m[i][j];
    }
    os << ']';
  }
  os << ']';
}

}  // namespace detail

inline void save_jsonl(std::span<const GraphInstance> dataset, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("save_jsonl: cannot open " + path + " for writing");
  for (const GraphInstance& g : dataset) {
    os << "{\"n\": " << g.num_nodes << ", \"edges\": [";
    for (size_t e = 0; e < g.edges.size(); ++e) {
      if (e) os << ',';
      os << '[' << g.edges[e][0] << ',' << g.edges[e][1] << ']';
    }
    os << "], \"nf\": ";
    detail::write_int_matrix(os, g.node_feats);
    os << ", \"ef\": ";
    detail::write_int_matrix(os, g.edge_feats);
    os << ", \"y\": " << g.label << "}\n";
  }
  if (!os) throw IoError("save_jsonl: write failed for " + path);
}

inline std::vector<GraphInstance> load_jsonl(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("load_jsonl: cannot open " + path);
  std::vector<GraphInstance> dataset;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where + ": invalid JSON: " + e.what());
    }
    if (!j.is_object()) throw DataError(where + ": record is not an object");
    for (const auto& [key, _] : j.items())
      if (key != "n" && key != "edges" && key != "nf" && key != "ef" && key != "y")
        throw DataError(where + ": unknown field \"" + key + "\"");
    for (const char* key : {"n", "edges", "nf", "ef", "y"})
      if (!j.contains(key)) throw DataError(where + ": missing field \"" + key + "\"");

    GraphInstance g;
    try {
      g.num_nodes = j.at("n").get<int>();
      for (const auto& e : j.at("edges")) {
        if (!e.is_array() || e.size() != 2)
          throw DataError(where + ": edge entry must be [src,dst]");
        g.edges.push_back({e[0].get<int>(), e[1].get<int>()});
      }
      g.node_feats = j.at("nf").get<std::vector<std::vector<int>>>();
      g.edge_feats = j.at("ef").get<std::vector<std::vector<int>>>();
      g.label = j.at("y").get<int>();
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where + ": malformed record: " + e.what());
    }
    for (size_t r = 1; r < g.node_feats.size(); ++r)
      if (g.node_feats[r].size() != g.node_feats[0].size())
        throw DataError(where + ": ragged node feature matrix");
    for (size_t r = 1; r < g.edge_feats.size(); ++r)
      if (g.edge_feats[r].size() != g.edge_feats[0].size())
        throw DataError(where + ": ragged edge feature matrix");
    validate_graph(g, where);
    dataset.push_back(std::move(g));
  }
  return dataset;
}

// Sidecar manifest written next to generated datasets.
inline void write_manifest(const std::string& path, const SyntheticSpec& spec,
                           std::span<const int> per_class_counts) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("write_manifest: cannot open " + path + " for writing");
  os << "{\"generator_version\": 1, \"seed\": " << spec.seed
     << ", \"per_class\": " << spec.per_class_count << ", \"classes\": " << per_class_counts.size()
     << ", \"counts\": [";
  for (size_t i = 0; i < per_class_counts.size(); ++i) {
    if (i) os << ',';
    os << per_class_counts[i];
  }
  os << "]}\n";
}

}  // namespace mlap
