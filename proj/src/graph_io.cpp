#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "gmp/error.hpp"
#include "gmp/graph.hpp"
#include "gmp/json_util.hpp"

namespace gmp {

using nlohmann::json;

namespace {

std::vector<NodeId> read_index_list(const json& doc, const std::string& ptr, std::size_t n) {
  const auto& arr = json_util::require_array(doc, ptr);
  std::vector<NodeId> out;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const auto id = json_util::require_index(arr[i], ptr + "/" + std::to_string(i));
    if (id >= n) throw ParseError(ptr + "/" + std::to_string(i), "node id out of range");
    out.push_back(id);
  }
  return out;
}

}  // namespace

LoadedGraph parse_graph_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError("", std::string("malformed JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ParseError("", "document must be an object");

  const std::size_t n = json_util::require_index(json_util::require_field(doc, "", "num_nodes"), "/num_nodes");
  const bool directed = json_util::require_field(doc, "", "directed").is_boolean()
                            ? doc["directed"].get<bool>()
                            : throw ParseError("/directed", "expected boolean");
  Mat node_feat = json_util::read_matrix(json_util::require_field(doc, "", "node_features"), "/node_features");
  if (node_feat.rows() != n) {
    throw ParseError("/node_features", "has " + std::to_string(node_feat.rows()) + " rows, expected " + std::to_string(n));
  }

  const auto& edges_json = json_util::require_array(json_util::require_field(doc, "", "edges"), "/edges");
  std::vector<EdgeInput> edges;
  for (std::size_t i = 0; i < edges_json.size(); ++i) {
    const std::string ptr = "/edges/" + std::to_string(i);
    const auto& pair = json_util::require_array(edges_json[i], ptr);
    if (pair.size() != 2) throw ParseError(ptr, "edge must be [src, dst]");
    const auto s = json_util::require_index(pair[0], ptr + "/0");
    const auto d = json_util::require_index(pair[1], ptr + "/1");
    if (s >= n) throw ParseError(ptr + "/0", "node id out of range");
    if (d >= n) throw ParseError(ptr + "/1", "node id out of range");
    edges.push_back({s, d});
  }

  std::optional<Mat> edge_feat;
  if (doc.contains("edge_features")) {
    edge_feat = json_util::read_matrix(doc["edge_features"], "/edge_features", edges.size());
    if (edge_feat->rows() != edges.size()) throw ParseError("/edge_features", "row count differs from edge count");
  }
  std::optional<std::vector<double>> weights;
  if (doc.contains("edge_weights")) {
    weights = json_util::read_vector(doc["edge_weights"], "/edge_weights");
    if (weights->size() != edges.size()) throw ParseError("/edge_weights", "length differs from edge count");
  }

  LoadedGraph out;
  try {
    out.graph = directed ? from_edge_list(n, edges, std::move(node_feat), std::move(edge_feat), std::move(weights), true)
                         : from_undirected_edge_list(n, edges, std::move(node_feat), std::move(edge_feat), std::move(weights));
  } catch (const std::invalid_argument& e) {
    throw ParseError("/edges", e.what());
  }

  if (doc.contains("labels")) {
    const auto& arr = json_util::require_array(doc["labels"], "/labels");
    if (arr.size() != n) throw ParseError("/labels", "length differs from num_nodes");
    std::vector<int> labels;
    for (std::size_t i = 0; i < arr.size(); ++i) {
      if (!arr[i].is_number_integer()) throw ParseError("/labels/" + std::to_string(i), "expected integer");
      labels.push_back(arr[i].get<int>());
    }
    out.graph.labels = std::move(labels);
  }
  if (doc.contains("splits")) {
    const auto& sp = doc["splits"];
    if (!sp.is_object()) throw ParseError("/splits", "expected object");
    SplitSpec split;
    split.train = read_index_list(json_util::require_field(sp, "/splits", "train"), "/splits/train", n);
    split.val = read_index_list(json_util::require_field(sp, "/splits", "val"), "/splits/val", n);
    split.test = read_index_list(json_util::require_field(sp, "/splits", "test"), "/splits/test", n);
    std::vector<int> seen(n, 0);
    for (const auto* part : {&split.train, &split.val, &split.test}) {
      for (NodeId v : *part) {
        if (seen[v]++) throw ParseError("/splits", "node " + std::to_string(v) + " appears in more than one split");
      }
    }
    out.splits = std::move(split);
  }
  return out;
}

LoadedGraph load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("", "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_graph_json(ss.str());
}

std::string dump_graph_json(const Graph& g, const std::optional<SplitSpec>& splits) {
  json doc;
  doc["num_nodes"] = g.num_nodes;
  doc["directed"] = g.directed;
  doc["node_features"] = g.node_feat.to_rows();
  json edges = json::array();
  json feats = json::array();
  json weights = json::array();
  const auto src = g.sources();
  for (EdgeId e = 0; e < g.num_edges(); ++e) {
    if (!g.directed && src[e] > g.dst[e]) continue;
    edges.push_back({src[e], g.dst[e]});
    auto row = g.edge_feat.row(e);
    feats.push_back(std::vector<double>(row.begin(), row.end()));
    weights.push_back(g.edge_weight[e]);
  }
  doc["edges"] = std::move(edges);
  if (g.edge_dim() > 0) doc["edge_features"] = std::move(feats);
  doc["edge_weights"] = std::move(weights);
  if (g.labels) doc["labels"] = *g.labels;
  if (splits) doc["splits"] = {{"train", splits->train}, {"val", splits->val}, {"test", splits->test}};
  return doc.dump() + "\n";
}

void save_json(const Graph& g, const std::filesystem::path& path, const std::optional<SplitSpec>& splits) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << dump_graph_json(g, splits);
}

}  // namespace gmp
