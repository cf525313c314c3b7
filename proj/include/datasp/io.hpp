#pragma once

// File formats: graph JSON, trajectory JSON Lines, dataset manifest, the
// binary tensor container, and model checkpoints.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "datasp/cost_model.hpp"
#include "datasp/engine.hpp"
#include "datasp/error.hpp"
#include "datasp/graph.hpp"
#include "datasp/trajectory.hpp"

namespace datasp {

using json = nlohmann::ordered_json;

inline std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t t = 0; t < size; ++t) {
    h ^= p[t];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ValidationError("write failed for " + path.string());
}

inline std::string file_hash(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return hex64(fnv1a(bytes.data(), bytes.size()));
}

inline json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(what + ": " + e.what());
  }
}

inline json read_json(const std::filesystem::path& path) { return parse_json(read_file(path), path.string()); }

inline void write_json(const std::filesystem::path& path, const json& doc) { write_file(path, doc.dump(2) + "\n"); }

// ---------------------------------------------------------------- graph --

struct GraphFile {
  Graph graph;
  bool directed = true;
  std::vector<double> prior;  // empty when neither costs nor positions were given
  std::vector<std::pair<double, double>> positions;
};

/// Undirected documents list each pair once; it expands to (u,v),(v,u) and
/// a per-pair prior applies to both directions.
inline GraphFile graph_from_json(const json& doc) {
  try {
    GraphFile out;
    const auto n = doc.at("num_nodes").get<std::size_t>();
    out.directed = doc.value("directed", true);
    std::vector<Edge> edges;
    for (const auto& e : doc.at("edges")) {
      require(e.is_array() && e.size() == 2, "graph: each edge must be [u, v]");
      edges.push_back({e[0].get<Node>(), e[1].get<Node>()});
    }
    out.graph = out.directed ? Graph(n, edges) : Graph::undirected(n, edges);
    if (doc.contains("node_positions")) {
      for (const auto& p : doc["node_positions"]) {
        require(p.is_array() && p.size() == 2, "graph: each position must be [x, y]");
        out.positions.push_back({p[0].get<double>(), p[1].get<double>()});
      }
      require(out.positions.size() == n, "graph: node_positions must list every node");
    }
    if (doc.contains("prior_costs")) {
      const auto raw = doc["prior_costs"].get<std::vector<double>>();
      require(raw.size() == edges.size(), "graph: prior_costs must align with edges");
      if (out.directed) {
        out.prior = raw;
      } else {
        for (double c : raw) {
          out.prior.push_back(c);
          out.prior.push_back(c);
        }
      }
      validate_priors(out.prior, out.graph);
    } else if (!out.positions.empty()) {
      out.prior = euclidean_priors(out.graph, out.positions);
    }
    return out;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("graph JSON: ") + e.what());
  }
}

/// Writes undirected graphs (edges in (u,v),(v,u) pairs with symmetric
/// priors) in the compact undirected form.
inline json graph_to_json(const Graph& g, std::span<const double> prior,
                          std::span<const std::pair<double, double>> positions, bool directed) {
  json doc;
  doc["num_nodes"] = g.node_count();
  doc["directed"] = directed;
  json edges = json::array();
  json costs = json::array();
  const std::size_t stride = directed ? 1 : 2;
  if (!directed) require(g.edge_count() % 2 == 0, "graph: undirected output needs paired edges");
  for (std::size_t e = 0; e < g.edge_count(); e += stride) {
    const auto [u, v] = g.edge(e);
    if (!directed)
      require(g.edge(e + 1) == Edge{v, u} && (prior.empty() || prior[e] == prior[e + 1]),
              "graph: edges are not stored as symmetric pairs");
    edges.push_back({u, v});
    if (!prior.empty()) costs.push_back(prior[e]);
  }
  doc["edges"] = std::move(edges);
  if (!prior.empty()) doc["prior_costs"] = std::move(costs);
  if (!positions.empty()) {
    json pos = json::array();
    for (const auto& [x, y] : positions) pos.push_back({x, y});
    doc["node_positions"] = std::move(pos);
  }
  return doc;
}

// --------------------------------------------------------- trajectories --

inline json record_to_json(const Record& r) {
  json doc;
  doc["context"] = r.context.features;
  if (!r.context.discrete.empty()) doc["discrete"] = r.context.discrete;
  require(r.paths.size() == 1, "trajectory file stores one path per record");
  doc["path"] = r.paths.front();
  doc["split"] = split_name(r.split);
  if (!r.true_costs.empty()) doc["true_costs"] = r.true_costs;
  return doc;
}

inline Record record_from_json(const json& doc) {
  Record r;
  r.context.features = doc.at("context").get<std::vector<double>>();
  if (doc.contains("discrete")) r.context.discrete = doc["discrete"].get<std::vector<std::int64_t>>();
  r.paths.push_back(doc.at("path").get<Path>());
  r.split = doc.contains("split") ? parse_split(doc["split"].get<std::string>()) : Split::train;
  if (doc.contains("true_costs")) r.true_costs = doc["true_costs"].get<std::vector<double>>();
  return r;
}

inline std::string trajectories_to_jsonl(const Dataset& ds) {
  std::string out;
  for (const auto& r : ds.records) out += record_to_json(r).dump() + "\n";
  return out;
}

inline Dataset trajectories_from_jsonl(const std::string& text, const std::string& what = "trajectories") {
  Dataset ds;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      ds.records.push_back(record_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw ValidationError(what + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return ds;
}

// ------------------------------------------------------------- manifest --

struct Manifest {
  std::filesystem::path graph;
  std::vector<std::filesystem::path> trajectories;
  json provenance;
};

/// Paths inside the manifest are relative to the manifest's directory.
inline json manifest_to_json(const Manifest& m, const Dataset& ds) {
  json doc;
  doc["graph"] = m.graph.generic_string();
  doc["trajectories"] = json::array();
  for (const auto& t : m.trajectories) doc["trajectories"].push_back(t.generic_string());
  json splits;
  for (Split s : {Split::train, Split::val, Split::test}) splits[split_name(s)] = ds.indices(s).size();
  doc["splits"] = std::move(splits);
  if (!m.provenance.is_null()) doc["provenance"] = m.provenance;
  return doc;
}

struct LoadedDataset {
  GraphFile graph;
  Dataset dataset;
  json manifest;
};

inline LoadedDataset load_dataset(const std::filesystem::path& manifest_path) {
  LoadedDataset out;
  out.manifest = read_json(manifest_path);
  const auto base = manifest_path.parent_path();
  try {
    out.graph = graph_from_json(read_json(base / out.manifest.at("graph").get<std::string>()));
    for (const auto& t : out.manifest.at("trajectories")) {
      const auto path = base / t.get<std::string>();
      auto part = trajectories_from_jsonl(read_file(path), path.string());
      for (auto& r : part.records) out.dataset.records.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw ValidationError("manifest: " + std::string(e.what()));
  }
  validate_dataset(out.dataset, out.graph.graph);
  if (out.manifest.contains("splits"))
    for (Split s : {Split::train, Split::val, Split::test}) {
      const auto want = out.manifest["splits"].value(split_name(s), std::size_t{0});
      require(want == out.dataset.indices(s).size(),
              std::string("manifest: ") + split_name(s) + " count disagrees with the trajectory files");
    }
  return out;
}

// ------------------------------------------------------ binary payloads --

namespace detail {

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}

inline std::uint64_t get_u64(const std::string& in, std::size_t& pos) {
  require(pos + 8 <= in.size(), "binary file truncated");
  std::uint64_t v = 0;
  for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + b])) << (8 * b);
  pos += 8;
  return v;
}

inline void put_doubles(std::string& out, std::span<const double> xs) {
  for (double x : xs) put_u64(out, std::bit_cast<std::uint64_t>(x));
}

inline std::vector<double> get_doubles(const std::string& in, std::size_t& pos, std::size_t count) {
  require(count <= (in.size() - std::min(pos, in.size())) / 8, "binary file truncated");
  std::vector<double> xs(count);
  for (double& x : xs) x = std::bit_cast<double>(get_u64(in, pos));
  return xs;
}

inline void expect_magic(const std::string& in, std::size_t& pos, const char* magic) {
  require(in.size() >= 8 && in.compare(0, 8, magic) == 0, std::string("not a ") + magic + " file");
  pos = 8;
}

}  // namespace detail

struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> values;  // row-major
};

/// "DSPTNSR1", rank, dims, then little-endian doubles.
inline std::string encode_tensor(const Tensor& t) {
  std::size_t total = 1;
  for (std::size_t d : t.shape) total *= d;
  require(total == t.values.size(), "tensor: shape does not match value count");
  std::string out = "DSPTNSR1";
  detail::put_u64(out, t.shape.size());
  for (std::size_t d : t.shape) detail::put_u64(out, d);
  detail::put_doubles(out, t.values);
  return out;
}

inline Tensor decode_tensor(const std::string& in) {
  std::size_t pos = 0;
  detail::expect_magic(in, pos, "DSPTNSR1");
  Tensor t;
  const auto rank = detail::get_u64(in, pos);
  require(rank <= 8, "tensor: unsupported rank");
  std::size_t total = 1;
  for (std::uint64_t r = 0; r < rank; ++r) {
    t.shape.push_back(detail::get_u64(in, pos));
    total *= t.shape.back();
  }
  t.values = detail::get_doubles(in, pos, total);
  require(pos == in.size(), "tensor: trailing bytes");
  return t;
}

inline Tensor to_tensor(const ShortcutTensor& p) {
  return {{p.size(), p.size(), p.size()}, {p.data().begin(), p.data().end()}};
}

inline Tensor to_tensor(const CostMatrix& m) { return {{m.size(), m.size()}, {m.data().begin(), m.data().end()}}; }

inline ShortcutTensor shortcut_tensor_from(const Tensor& t) {
  require(t.shape.size() == 3 && t.shape[0] == t.shape[1] && t.shape[1] == t.shape[2],
          "tensor: expected an n x n x n shortcut tensor");
  ShortcutTensor p(t.shape[0]);
  std::copy(t.values.begin(), t.values.end(), p.data().begin());
  return p;
}

// ----------------------------------------------------------- checkpoint --

struct Checkpoint {
  ModelArchitecture arch;
  std::uint64_t step = 0;
  std::vector<double> params;
  std::optional<AdamState> adam;
  json extra = json::object();  // free-form metadata (beta, prior hash, ...)
};

/// "DSPCKPT1", header length, JSON header, params, then Adam m and v when
/// present.
inline std::string encode_checkpoint(const Checkpoint& c) {
  require(c.params.size() == c.arch.parameter_count(), "checkpoint: parameter count mismatch");
  json h;
  h["format"] = "DSPCKPT1";
  h["architecture"] = {{"feature_dim", c.arch.feature_dim},
                       {"hidden", c.arch.hidden},
                       {"edge_count", c.arch.edge_count},
                       {"cost_floor", c.arch.cost_floor},
                       {"output", "softplus_residual"}};
  h["feature_dim"] = c.arch.feature_dim;
  h["edge_count"] = c.arch.edge_count;
  h["cost_floor"] = c.arch.cost_floor;
  h["step"] = c.step;
  h["parameter_count"] = c.params.size();
  h["adam_step"] = c.adam ? json(c.adam->t) : json(nullptr);
  h["extra"] = c.extra;
  const std::string header = h.dump();
  std::string out = "DSPCKPT1";
  detail::put_u64(out, header.size());
  out += header;
  detail::put_doubles(out, c.params);
  if (c.adam) {
    require(c.adam->m.size() == c.params.size() && c.adam->v.size() == c.params.size(),
            "checkpoint: optimizer state size mismatch");
    detail::put_doubles(out, c.adam->m);
    detail::put_doubles(out, c.adam->v);
  }
  return out;
}

inline Checkpoint decode_checkpoint(const std::string& in) {
  std::size_t pos = 0;
  detail::expect_magic(in, pos, "DSPCKPT1");
  const auto len = detail::get_u64(in, pos);
  require(len <= in.size() - pos, "checkpoint: header truncated");
  const json h = parse_json(in.substr(pos, len), "checkpoint header");
  pos += len;
  Checkpoint c;
  try {
    const auto& a = h.at("architecture");
    require(a.value("output", std::string()) == "softplus_residual", "checkpoint: unknown output parametrization");
    c.arch.feature_dim = a.at("feature_dim").get<std::size_t>();
    c.arch.hidden = a.at("hidden").get<std::vector<std::size_t>>();
    c.arch.edge_count = a.at("edge_count").get<std::size_t>();
    c.arch.cost_floor = a.at("cost_floor").get<double>();
    c.step = h.at("step").get<std::uint64_t>();
    c.extra = h.value("extra", json::object());
    const auto count = h.at("parameter_count").get<std::size_t>();
    require(count == c.arch.parameter_count(), "checkpoint: parameter count disagrees with architecture");
    c.params = detail::get_doubles(in, pos, count);
    if (!h.at("adam_step").is_null()) {
      AdamState st;
      st.t = h["adam_step"].get<std::uint64_t>();
      st.m = detail::get_doubles(in, pos, count);
      st.v = detail::get_doubles(in, pos, count);
      c.adam = std::move(st);
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("checkpoint header: ") + e.what());
  }
  require(pos == in.size(), "checkpoint: trailing bytes");
  return c;
}

}  // namespace datasp
