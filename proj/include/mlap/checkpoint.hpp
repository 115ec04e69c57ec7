#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mlap/model.hpp"

namespace mlap {

// Checkpoint container: a magic tag, the config as a key=value text block,
// then each parameter as (name, rows, cols, 64-bit little-endian values).
// Values round-trip bit-exactly.

namespace detail {

constexpr char kCkptMagic[8] = {'M', 'L', 'A', 'P', 'C', 'K', '1', '\n'};

inline void put_u64(std::ostream& os, uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  os.write(reinterpret_cast<const char*>(buf), 8);
}

inline uint64_t get_u64(std::istream& is, const std::string& what) {
  unsigned char buf[8];
  if (!is.read(reinterpret_cast<char*>(buf), 8))
    throw IoError("checkpoint: truncated file while reading " + what);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf[i]) << (8 * i);
  return v;
}

inline void put_f64(std::ostream& os, double d) {
  uint64_t bits;
  std::memcpy(&bits, &d, 8);
  put_u64(os, bits);
}

inline double get_f64(std::istream& is, const std::string& what) {
  const uint64_t bits = get_u64(is, what);
  double d;
  std::memcpy(&d, &bits, 8);
  return d;
}

inline void put_string(std::ostream& os, const std::string& s) {
  put_u64(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& is, const std::string& what) {
  const uint64_t len = get_u64(is, what);
  if (len > (1ULL << 32)) throw IoError("checkpoint: corrupt length for " + what);
  std::string s(len, '\0');
  if (!is.read(s.data(), static_cast<std::streamsize>(len)))
    throw IoError("checkpoint: truncated file while reading " + what);
  return s;
}

inline std::string vocab_to_text(const std::vector<int>& v) {
  std::ostringstream os;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) os << ',';
    os << v[i];
  }
  return os.str();
}

inline std::vector<int> vocab_from_text(const std::string& s) {
  std::vector<int> out;
  if (s.empty()) return out;
  std::istringstream is(s);
  std::string tok;
  while (std::getline(is, tok, ',')) out.push_back(std::stoi(tok));
  return out;
}

}  // namespace detail

inline std::string config_to_text(const ModelConfig& cfg) {
  std::ostringstream os;
  os << "arch=" << to_string(cfg.arch) << "\n"
     << "aggregator=" << to_string(cfg.aggregator) << "\n"
     << "layers=" << cfg.layers << "\n"
     << "dim=" << cfg.dim << "\n"
     << "dropout=" << cfg.dropout << "\n"
     << "graphnorm=" << (cfg.graphnorm ? "true" : "false") << "\n"
     << "head=" << to_string(cfg.head) << "\n"
     << "num_classes=" << cfg.num_classes << "\n"
     << "lr_base=" << cfg.lr_base << "\n"
     << "lr_decay_factor=" << cfg.lr_decay_factor << "\n"
     << "lr_decay_every=" << cfg.lr_decay_every << "\n"
     << "epochs=" << cfg.epochs << "\n"
     << "batch_size=" << cfg.batch_size << "\n"
     << "seed=" << cfg.seed << "\n"
     << "node_vocab=" << detail::vocab_to_text(cfg.node_vocab_sizes) << "\n"
     << "edge_vocab=" << detail::vocab_to_text(cfg.edge_vocab_sizes) << "\n";
  return os.str();
}

inline ModelConfig config_from_text(const std::string& text) {
  ModelConfig cfg;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) throw IoError("checkpoint: malformed config line: " + line);
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 1);
    if (key == "arch") cfg.arch = arch_from_string(val);
    else if (key == "aggregator") cfg.aggregator = aggregator_from_string(val);
    else if (key == "layers") cfg.layers = std::stoi(val);
    else if (key == "dim") cfg.dim = std::stoi(val);
    else if (key == "dropout") cfg.dropout = std::stod(val);
    else if (key == "graphnorm") cfg.graphnorm = (val == "true");
    else if (key == "head") cfg.head = head_from_string(val);
    else if (key == "num_classes") cfg.num_classes = std::stoi(val);
    else if (key == "lr_base") cfg.lr_base = std::stod(val);
    else if (key == "lr_decay_factor") cfg.lr_decay_factor = std::stod(val);
    else if (key == "lr_decay_every") cfg.lr_decay_every = std::stoi(val);
    else if (key == "epochs") cfg.epochs = std::stoi(val);
    else if (key == "batch_size") cfg.batch_size = std::stoi(val);
    else if (key == "seed") cfg.seed = std::stoull(val);
    else if (key == "node_vocab") cfg.node_vocab_sizes = detail::vocab_from_text(val);
    else if (key == "edge_vocab") cfg.edge_vocab_sizes = detail::vocab_from_text(val);
    else throw IoError("checkpoint: unknown config key \"" + key + "\"");
  }
  return cfg;
}

inline void checkpoint_save(const Model& model, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("checkpoint_save: cannot open " + path + " for writing");
  os.write(detail::kCkptMagic, sizeof(detail::kCkptMagic));
  detail::put_string(os, config_to_text(model.cfg));
  const auto params = model.named_parameters();
  detail::put_u64(os, params.size());
  for (const auto& [name, t] : params) {
    detail::put_string(os, name);
    detail::put_u64(os, static_cast<uint64_t>(t.rows()));
    detail::put_u64(os, static_cast<uint64_t>(t.cols()));
    for (size_t i = 0; i < t.size(); ++i) detail::put_f64(os, t.data()[i]);
  }
  if (!os) throw IoError("checkpoint_save: write failed for " + path);
}

inline Model checkpoint_load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("checkpoint_load: cannot open " + path);
  char magic[sizeof(detail::kCkptMagic)];
  if (!is.read(magic, sizeof(magic)) ||
      std::memcmp(magic, detail::kCkptMagic, sizeof(magic)) != 0)
    throw IoError("checkpoint_load: " + path + " is not a checkpoint file");
  const ModelConfig cfg = config_from_text(detail::get_string(is, "config"));
  Model model = Model::build(cfg);

  std::map<std::string, Tensor> by_name;
  for (const auto& [name, t] : model.named_parameters()) by_name.emplace(name, t);
  const uint64_t count = detail::get_u64(is, "parameter count");
  if (count != by_name.size())
    throw IoError("checkpoint_load: expected " + std::to_string(by_name.size()) +
                  " parameters, file has " + std::to_string(count));
  for (uint64_t k = 0; k < count; ++k) {
    const std::string name = detail::get_string(is, "parameter name");
    const auto it = by_name.find(name);
    if (it == by_name.end())
      throw IoError("checkpoint_load: unexpected parameter \"" + name + "\"");
    Tensor t = it->second;
    const auto rows = static_cast<int>(detail::get_u64(is, name + " rows"));
    const auto cols = static_cast<int>(detail::get_u64(is, name + " cols"));
    if (rows != t.rows() || cols != t.cols())
      throw IoError("checkpoint_load: shape mismatch for \"" + name + "\": file has " +
                    std::to_string(rows) + "x" + std::to_string(cols) + ", model needs " +
                    std::to_string(t.rows()) + "x" + std::to_string(t.cols()));
    for (size_t i = 0; i < t.size(); ++i) t.data()[i] = detail::get_f64(is, name);
  }
  return model;
}

}  // namespace mlap
