#pragma once

// CSR graph storage. Edges are directed (src -> dst) and stored sorted by
// (src, dst); this canonical order indexes every per-edge array in the
// library. An edge src=u, dst=v carries the message M_{v<-u}.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <utility>
#include <vector>

#include "gmp/dense.hpp"

namespace gmp {

using NodeId = std::size_t;
using EdgeId = std::size_t;

struct SplitSpec {
  std::vector<NodeId> train;
  std::vector<NodeId> val;
  std::vector<NodeId> test;

  bool operator==(const SplitSpec&) const = default;
};

struct Graph {
  std::size_t num_nodes = 0;
  std::vector<std::size_t> row_offsets{0};
  std::vector<NodeId> dst;
  std::vector<double> edge_weight;
  Mat node_feat;
  /// |E| x d_E; d_E may be zero.
  Mat edge_feat;
  std::optional<std::vector<int>> labels;
  bool directed = true;

  std::size_t num_edges() const noexcept { return dst.size(); }
  std::size_t node_dim() const noexcept { return node_feat.cols(); }
  std::size_t edge_dim() const noexcept { return edge_feat.cols(); }

  /// Source node of every edge, in canonical order.
  std::vector<NodeId> sources() const;
  /// Number of incoming edges per node.
  std::vector<std::size_t> in_degree() const;
  std::optional<EdgeId> find_edge(NodeId src, NodeId dst) const;

  bool operator==(const Graph&) const = default;
};

struct EdgeInput {
  NodeId src;
  NodeId dst;
};

/// Throws ShapeError/ParameterError if any CSR or symmetry invariant is broken.
void check_invariants(const Graph& g);

/// Builds a canonical graph from directed edges in any order. Optional
/// per-edge arrays follow the order of `edges`.
Graph from_edge_list(std::size_t num_nodes, const std::vector<EdgeInput>& edges, Mat node_feat,
                     std::optional<Mat> edge_feat = std::nullopt,
                     std::optional<std::vector<double>> weights = std::nullopt, bool directed = true);

/// Each pair is stored in both directions sharing weight and edge feature.
/// Self-loops are stored once.
Graph from_undirected_edge_list(std::size_t num_nodes, const std::vector<EdgeInput>& edges, Mat node_feat,
                                std::optional<Mat> edge_feat = std::nullopt,
                                std::optional<std::vector<double>> weights = std::nullopt);

struct LoadedGraph {
  Graph graph;
  std::optional<SplitSpec> splits;
};

LoadedGraph load_json(const std::filesystem::path& path);
LoadedGraph parse_graph_json(const std::string& text);
void save_json(const Graph& g, const std::filesystem::path& path, const std::optional<SplitSpec>& splits = std::nullopt);
std::string dump_graph_json(const Graph& g, const std::optional<SplitSpec>& splits = std::nullopt);

struct SbmParams {
  std::vector<std::size_t> block_sizes;
  double p_in = 0.0;
  double p_out = 0.0;
  std::size_t node_dim = 1;
  double feature_shift = 1.0;
  double feature_std = 1.0;
};

/// Undirected stochastic block model. Block b's features have mean
/// feature_shift along axis (b mod node_dim); labels are block ids.
Graph sbm_generate(Rng& rng, const SbmParams& params);

/// Toggles floor(p * |pairs with an edge|) distinct node pairs chosen
/// uniformly: edges are removed, non-edges added with weight 1 and zero
/// edge features. Undirected graphs flip both directions.
Graph random_flip(const Graph& g, double p, Rng& rng);

/// Toggles `budget` distinct pairs (target, u), u != target.
Graph targeted_flip(const Graph& g, NodeId target, std::size_t budget, Rng& rng);

/// Graph with a unit-weight, zero-feature self-loop added to every node that
/// lacks one, plus the index of each original edge in the new graph.
struct SelfLoopGraph {
  Graph graph;
  std::vector<EdgeId> original_to_new;
};
SelfLoopGraph with_self_loops(const Graph& g);

struct NormalizedAdjacency {
  /// The input graph, or the self-looped one when loops were requested.
  Graph graph;
  /// Index in `graph` of each edge of the input graph.
  std::vector<EdgeId> original_to_new;
  /// A_vu / sqrt(deg(v) deg(u)) per edge of `graph`; deg is the weighted
  /// in-degree. Nodes with non-positive degree contribute zero.
  std::vector<double> weight;
};
NormalizedAdjacency symmetric_normalize(const Graph& g, bool add_self_loops);

/// Gradient of the loss w.r.t. the raw weights of the graph that was
/// normalized, given the gradient w.r.t. the normalized weights.
std::vector<double> symmetric_normalize_backward(const NormalizedAdjacency& norm, std::span<const double> grad_weight);

}  // namespace gmp
