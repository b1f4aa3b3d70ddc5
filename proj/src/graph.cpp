#include "gmp/graph.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <string>

#include "gmp/error.hpp"

namespace gmp {

namespace {

std::string edge_str(NodeId s, NodeId d) { return "(" + std::to_string(s) + "," + std::to_string(d) + ")"; }

struct EdgeRecord {
  NodeId src;
  NodeId dst;
  double weight;
  std::vector<double> feat;
};

Graph from_records(std::size_t n, std::vector<EdgeRecord> records, const Graph& like) {
  std::vector<EdgeInput> edges;
  std::vector<double> weights;
  Mat feat(records.size(), like.edge_dim());
  edges.reserve(records.size());
  weights.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    edges.push_back({records[i].src, records[i].dst});
    weights.push_back(records[i].weight);
    std::copy(records[i].feat.begin(), records[i].feat.end(), feat.row(i).begin());
  }
  Graph g = from_edge_list(n, edges, like.node_feat, std::move(feat), std::move(weights), like.directed);
  g.labels = like.labels;
  return g;
}

std::vector<EdgeRecord> records_of(const Graph& g) {
  std::vector<EdgeRecord> out;
  out.reserve(g.num_edges());
  const auto src = g.sources();
  for (EdgeId e = 0; e < g.num_edges(); ++e) {
    auto row = g.edge_feat.row(e);
    out.push_back({src[e], g.dst[e], g.edge_weight[e], {row.begin(), row.end()}});
  }
  return out;
}

/// k distinct values from [0, m) in increasing order (Floyd's algorithm).
std::vector<std::size_t> sample_distinct(std::size_t m, std::size_t k, Rng& rng) {
  std::set<std::size_t> chosen;
  for (std::size_t j = m - k; j < m; ++j) {
    const std::size_t t = rng.uniform_index(j + 1);
    if (!chosen.insert(t).second) chosen.insert(j);
  }
  return {chosen.begin(), chosen.end()};
}

/// Maps a linear index to the pair (i, j), i < j, in row-major enumeration.
std::pair<NodeId, NodeId> unordered_pair(std::size_t n, std::size_t index) {
  NodeId i = 0;
  while (index >= n - 1 - i) {
    index -= n - 1 - i;
    ++i;
  }
  return {i, i + 1 + index};
}

Graph toggle_pairs(const Graph& g, const std::vector<std::pair<NodeId, NodeId>>& pairs, bool both_directions) {
  std::map<std::pair<NodeId, NodeId>, EdgeRecord> edges;
  for (auto& r : records_of(g)) edges.emplace(std::pair{r.src, r.dst}, std::move(r));
  const std::vector<double> zero(g.edge_dim(), 0.0);
  auto toggle = [&](NodeId s, NodeId d) {
    auto it = edges.find({s, d});
    if (it != edges.end()) {
      edges.erase(it);
    } else {
      edges.emplace(std::pair{s, d}, EdgeRecord{s, d, 1.0, zero});
    }
  };
  for (auto [a, b] : pairs) {
    toggle(a, b);
    if (both_directions) toggle(b, a);
  }
  std::vector<EdgeRecord> out;
  out.reserve(edges.size());
  for (auto& [key, rec] : edges) out.push_back(std::move(rec));
  return from_records(g.num_nodes, std::move(out), g);
}

}  // namespace

std::vector<NodeId> Graph::sources() const {
  std::vector<NodeId> src(num_edges());
  for (NodeId u = 0; u < num_nodes; ++u)
    for (std::size_t e = row_offsets[u]; e < row_offsets[u + 1]; ++e) src[e] = u;
  return src;
}

std::vector<std::size_t> Graph::in_degree() const {
  std::vector<std::size_t> deg(num_nodes, 0);
  for (NodeId v : dst) ++deg[v];
  return deg;
}

std::optional<EdgeId> Graph::find_edge(NodeId src, NodeId d) const {
  if (src >= num_nodes) return std::nullopt;
  auto first = dst.begin() + static_cast<std::ptrdiff_t>(row_offsets[src]);
  auto last = dst.begin() + static_cast<std::ptrdiff_t>(row_offsets[src + 1]);
  auto it = std::lower_bound(first, last, d);
  if (it == last || *it != d) return std::nullopt;
  return static_cast<EdgeId>(it - dst.begin());
}

void check_invariants(const Graph& g) {
  const std::size_t n = g.num_nodes;
  const std::size_t m = g.dst.size();
  if (g.row_offsets.size() != n + 1) throw ShapeError("row_offsets must have num_nodes+1 entries");
  if (g.row_offsets.front() != 0 || g.row_offsets.back() != m) {
    throw ShapeError("row_offsets must start at 0 and end at |E|");
  }
  for (NodeId u = 0; u < n; ++u) {
    if (g.row_offsets[u] > g.row_offsets[u + 1]) throw ShapeError("row_offsets must be nondecreasing");
    for (std::size_t e = g.row_offsets[u]; e < g.row_offsets[u + 1]; ++e) {
      if (g.dst[e] >= n) throw ShapeError("edge " + std::to_string(e) + " has out-of-range destination");
      if (e > g.row_offsets[u] && g.dst[e - 1] >= g.dst[e]) {
        throw ShapeError("destinations of node " + std::to_string(u) + " are not strictly increasing");
      }
    }
  }
  if (g.edge_weight.size() != m) throw ShapeError("edge_weight length differs from |E|");
  if (g.edge_feat.rows() != m) throw ShapeError("edge_feat rows " + g.edge_feat.shape_string() + " differ from |E|");
  if (g.node_feat.rows() != n) throw ShapeError("node_feat rows " + g.node_feat.shape_string() + " differ from N");
  if (g.labels && g.labels->size() != n) throw ShapeError("labels length differs from N");
  for (double w : g.edge_weight) {
    if (!std::isfinite(w)) throw NumericError("non-finite edge weight");
  }
  require_finite(g.node_feat, "node_feat");
  require_finite(g.edge_feat, "edge_feat");
  if (!g.directed) {
    const auto src = g.sources();
    for (EdgeId e = 0; e < m; ++e) {
      const auto rev = g.find_edge(g.dst[e], src[e]);
      if (!rev) throw ParameterError("undirected graph lacks reverse of edge " + edge_str(src[e], g.dst[e]));
      if (g.edge_weight[*rev] != g.edge_weight[e]) {
        throw ParameterError("undirected edge " + edge_str(src[e], g.dst[e]) + " has asymmetric weight");
      }
      const auto a = g.edge_feat.row(e);
      const auto b = g.edge_feat.row(*rev);
      if (!std::equal(a.begin(), a.end(), b.begin())) {
        throw ParameterError("undirected edge " + edge_str(src[e], g.dst[e]) + " has asymmetric features");
      }
    }
  }
}

Graph from_edge_list(std::size_t num_nodes, const std::vector<EdgeInput>& edges, Mat node_feat,
                     std::optional<Mat> edge_feat, std::optional<std::vector<double>> weights, bool directed) {
  const std::size_t m = edges.size();
  if (node_feat.rows() != num_nodes) {
    throw ShapeError("node_feat has " + std::to_string(node_feat.rows()) + " rows, expected " + std::to_string(num_nodes));
  }
  if (edge_feat && edge_feat->rows() != m) {
    throw ShapeError("edge_feat has " + std::to_string(edge_feat->rows()) + " rows for " + std::to_string(m) + " edges");
  }
  if (weights && weights->size() != m) {
    throw ShapeError("weights has " + std::to_string(weights->size()) + " entries for " + std::to_string(m) + " edges");
  }
  for (const auto& e : edges) {
    if (e.src >= num_nodes || e.dst >= num_nodes) {
      throw ParameterError("edge " + edge_str(e.src, e.dst) + " references a node outside [0," +
                           std::to_string(num_nodes) + ")");
    }
  }
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::pair{edges[a].src, edges[a].dst} < std::pair{edges[b].src, edges[b].dst};
  });
  const std::size_t d_e = edge_feat ? edge_feat->cols() : 0;

  Graph g;
  g.num_nodes = num_nodes;
  g.directed = directed;
  g.row_offsets.assign(num_nodes + 1, 0);
  g.dst.resize(m);
  g.edge_weight.resize(m);
  g.edge_feat = Mat(m, d_e);
  for (std::size_t i = 0; i < m; ++i) {
    const auto& e = edges[order[i]];
    if (i > 0 && edges[order[i - 1]].src == e.src && edges[order[i - 1]].dst == e.dst) {
      throw ParameterError("duplicate edge " + edge_str(e.src, e.dst));
    }
    ++g.row_offsets[e.src + 1];
    g.dst[i] = e.dst;
    g.edge_weight[i] = weights ? (*weights)[order[i]] : 1.0;
    if (d_e > 0) {
      auto from = edge_feat->row(order[i]);
      std::copy(from.begin(), from.end(), g.edge_feat.row(i).begin());
    }
  }
  std::partial_sum(g.row_offsets.begin(), g.row_offsets.end(), g.row_offsets.begin());
  g.node_feat = std::move(node_feat);
  check_invariants(g);
  return g;
}

Graph from_undirected_edge_list(std::size_t num_nodes, const std::vector<EdgeInput>& edges, Mat node_feat,
                                std::optional<Mat> edge_feat, std::optional<std::vector<double>> weights) {
  if (edge_feat && edge_feat->rows() != edges.size()) throw ShapeError("edge_feat rows differ from edge count");
  if (weights && weights->size() != edges.size()) throw ShapeError("weights length differs from edge count");
  std::vector<EdgeInput> both;
  std::vector<std::size_t> origin;
  for (std::size_t i = 0; i < edges.size(); ++i) {
    both.push_back(edges[i]);
    origin.push_back(i);
    if (edges[i].src != edges[i].dst) {
      both.push_back({edges[i].dst, edges[i].src});
      origin.push_back(i);
    }
  }
  std::optional<Mat> feat;
  if (edge_feat) {
    feat = Mat(both.size(), edge_feat->cols());
    for (std::size_t i = 0; i < both.size(); ++i) {
      auto from = edge_feat->row(origin[i]);
      std::copy(from.begin(), from.end(), feat->row(i).begin());
    }
  }
  std::optional<std::vector<double>> w;
  if (weights) {
    w.emplace();
    for (std::size_t i : origin) w->push_back((*weights)[i]);
  }
  return from_edge_list(num_nodes, both, std::move(node_feat), std::move(feat), std::move(w), false);
}

Graph sbm_generate(Rng& rng, const SbmParams& p) {
  if (p.block_sizes.empty()) throw ParameterError("sbm: block_sizes must be nonempty");
  if (!(p.p_in >= 0.0 && p.p_in <= 1.0)) throw ParameterError("sbm: p_in must lie in [0,1]");
  if (!(p.p_out >= 0.0 && p.p_out <= 1.0)) throw ParameterError("sbm: p_out must lie in [0,1]");
  if (p.node_dim == 0) throw ParameterError("sbm: node_dim must be positive");
  if (!(p.feature_std >= 0.0)) throw ParameterError("sbm: feature_std must be non-negative");

  std::vector<int> block;
  for (std::size_t b = 0; b < p.block_sizes.size(); ++b) block.insert(block.end(), p.block_sizes[b], static_cast<int>(b));
  const std::size_t n = block.size();

  Mat feat(n, p.node_dim);
  for (NodeId v = 0; v < n; ++v) {
    for (double& x : feat.row(v)) x = p.feature_std * rng.normal();
    feat(v, static_cast<std::size_t>(block[v]) % p.node_dim) += p.feature_shift;
  }
  std::vector<EdgeInput> edges;
  for (NodeId i = 0; i < n; ++i) {
    for (NodeId j = i + 1; j < n; ++j) {
      const double prob = block[i] == block[j] ? p.p_in : p.p_out;
      if (rng.uniform() < prob) edges.push_back({i, j});
    }
  }
  Graph g = from_undirected_edge_list(n, edges, std::move(feat));
  g.labels = std::move(block);
  return g;
}

Graph random_flip(const Graph& g, double p, Rng& rng) {
  if (!(p >= 0.0 && p <= 1.0)) throw ParameterError("random_flip: p must lie in [0,1]");
  const std::size_t n = g.num_nodes;
  const auto src = g.sources();
  std::size_t existing = 0;
  for (EdgeId e = 0; e < g.num_edges(); ++e) {
    if (src[e] == g.dst[e]) continue;
    if (g.directed || src[e] < g.dst[e]) ++existing;
  }
  const auto k = static_cast<std::size_t>(std::floor(p * static_cast<double>(existing)));
  if (k == 0 || n < 2) return g;

  std::vector<std::pair<NodeId, NodeId>> pairs;
  if (g.directed) {
    for (std::size_t idx : sample_distinct(n * (n - 1), k, rng)) {
      const NodeId a = idx / (n - 1);
      NodeId b = idx % (n - 1);
      if (b >= a) ++b;
      pairs.emplace_back(a, b);
    }
  } else {
    for (std::size_t idx : sample_distinct(n * (n - 1) / 2, k, rng)) pairs.push_back(unordered_pair(n, idx));
  }
  return toggle_pairs(g, pairs, !g.directed);
}

Graph targeted_flip(const Graph& g, NodeId target, std::size_t budget, Rng& rng) {
  if (target >= g.num_nodes) throw ParameterError("targeted_flip: target out of range");
  if (budget > g.num_nodes - 1) {
    throw ParameterError("targeted_flip: budget " + std::to_string(budget) + " exceeds the " +
                         std::to_string(g.num_nodes - 1) + " flippable pairs");
  }
  if (budget == 0) return g;
  std::vector<std::pair<NodeId, NodeId>> pairs;
  for (std::size_t idx : sample_distinct(g.num_nodes - 1, budget, rng)) {
    const NodeId u = idx >= target ? idx + 1 : idx;
    // Directed graphs toggle the edge feeding the target.
    pairs.emplace_back(u, target);
  }
  return toggle_pairs(g, pairs, !g.directed);
}

SelfLoopGraph with_self_loops(const Graph& g) {
  auto records = records_of(g);
  const std::vector<double> zero(g.edge_dim(), 0.0);
  for (NodeId v = 0; v < g.num_nodes; ++v) {
    if (!g.find_edge(v, v)) records.push_back({v, v, 1.0, zero});
  }
  SelfLoopGraph out{from_records(g.num_nodes, std::move(records), g), {}};
  const auto src = g.sources();
  out.original_to_new.resize(g.num_edges());
  for (EdgeId e = 0; e < g.num_edges(); ++e) out.original_to_new[e] = *out.graph.find_edge(src[e], g.dst[e]);
  return out;
}

NormalizedAdjacency symmetric_normalize(const Graph& g, bool add_self_loops) {
  NormalizedAdjacency out;
  if (add_self_loops) {
    auto looped = with_self_loops(g);
    out.graph = std::move(looped.graph);
    out.original_to_new = std::move(looped.original_to_new);
  } else {
    out.graph = g;
    out.original_to_new.resize(g.num_edges());
    std::iota(out.original_to_new.begin(), out.original_to_new.end(), EdgeId{0});
  }
  const Graph& h = out.graph;
  std::vector<double> deg(h.num_nodes, 0.0);
  for (EdgeId e = 0; e < h.num_edges(); ++e) deg[h.dst[e]] += h.edge_weight[e];
  std::vector<double> inv_sqrt(h.num_nodes, 0.0);
  for (NodeId v = 0; v < h.num_nodes; ++v) inv_sqrt[v] = deg[v] > 0.0 ? 1.0 / std::sqrt(deg[v]) : 0.0;
  const auto src = h.sources();
  out.weight.resize(h.num_edges());
  for (EdgeId e = 0; e < h.num_edges(); ++e) {
    out.weight[e] = h.edge_weight[e] * inv_sqrt[h.dst[e]] * inv_sqrt[src[e]];
  }
  return out;
}

std::vector<double> symmetric_normalize_backward(const NormalizedAdjacency& norm, std::span<const double> grad_weight) {
  const Graph& h = norm.graph;
  if (grad_weight.size() != h.num_edges()) throw ShapeError("symmetric_normalize_backward: gradient length differs from |E|");
  std::vector<double> deg(h.num_nodes, 0.0);
  for (EdgeId e = 0; e < h.num_edges(); ++e) deg[h.dst[e]] += h.edge_weight[e];
  std::vector<double> s(h.num_nodes, 0.0);
  for (NodeId v = 0; v < h.num_nodes; ++v) s[v] = deg[v] > 0.0 ? 1.0 / std::sqrt(deg[v]) : 0.0;
  const auto src = h.sources();

  std::vector<double> grad_raw(h.num_edges(), 0.0);
  std::vector<double> grad_deg(h.num_nodes, 0.0);
  for (EdgeId e = 0; e < h.num_edges(); ++e) {
    const NodeId v = h.dst[e];
    const NodeId u = src[e];
    const double g = grad_weight[e];
    grad_raw[e] += g * s[v] * s[u];
    // d s / d deg = -s^3 / 2
    grad_deg[v] += g * h.edge_weight[e] * s[u] * (-0.5 * s[v] * s[v] * s[v]);
    grad_deg[u] += g * h.edge_weight[e] * s[v] * (-0.5 * s[u] * s[u] * s[u]);
  }
  for (EdgeId e = 0; e < h.num_edges(); ++e) grad_raw[e] += grad_deg[h.dst[e]];

  std::vector<double> out(norm.original_to_new.size());
  for (EdgeId e = 0; e < out.size(); ++e) out[e] = grad_raw[norm.original_to_new[e]];
  return out;
}

}  // namespace gmp
