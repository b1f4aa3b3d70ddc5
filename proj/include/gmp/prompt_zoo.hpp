#pragma once

// Graph data prompts: learnable edits applied to the graph before it reaches
// the frozen backbone.

#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "gmp/dense.hpp"
#include "gmp/graph.hpp"

namespace gmp {

/// H + 1 zᵀ
struct NodeSingle {
  std::vector<double> z;
};
/// H + softmax(H Zᵀ / tau) Z
struct NodeMulti {
  Mat Z;
  double tau = 1.0;
};
/// E + 1 fᵀ
struct EdgeSingle {
  std::vector<double> f;
};
/// E + softmax(E Fᵀ / tau) F
struct EdgeMulti {
  Mat F;
  double tau = 1.0;
};
/// A + S on the existing edge support.
struct EdgeWeightAdd {
  std::vector<double> S;
};
/// A ⊙ S on the existing edge support.
struct EdgeWeightMul {
  std::vector<double> S;
};
/// K prompt nodes with features Hp, each link (v, k) adding the directed edge
/// v <- prompt k. Internal edges among prompt nodes are accepted and kept in
/// the JSON round trip but play no part in message passing.
struct SubgraphPrompt {
  Mat Hp;
  std::vector<std::pair<NodeId, std::size_t>> links;
  std::vector<double> link_weight;
  /// links.size() x d_E
  Mat link_feat;
  std::vector<std::pair<std::size_t, std::size_t>> internal_edges;

  std::size_t num_prompt_nodes() const noexcept { return Hp.rows(); }
};
/// Node multi-prompt followed by multiplicative edge weights.
struct Hybrid {
  Mat Z;
  double tau = 1.0;
  std::vector<double> S;
};

using GdpSpec = std::variant<NodeSingle, NodeMulti, EdgeSingle, EdgeMulti, EdgeWeightAdd, EdgeWeightMul, SubgraphPrompt,
                             Hybrid>;

/// "node_single", "node_multi", ... as used in the JSON "kind" field.
std::string gdp_kind(const GdpSpec& spec);

/// softmax(X Bᵀ / tau), one row per row of X.
Mat assignment(const Mat& X, const Mat& B, double tau);

Graph apply_node_prompt(const Graph& g, const NodeSingle& p);
Graph apply_node_prompt(const Graph& g, const NodeMulti& p);
Graph apply_edge_feature_prompt(const Graph& g, const EdgeSingle& p);
Graph apply_edge_feature_prompt(const Graph& g, const EdgeMulti& p);
Graph apply_edge_weight_prompt(const Graph& g, const EdgeWeightAdd& p);
Graph apply_edge_weight_prompt(const Graph& g, const EdgeWeightMul& p);
/// Union graph with N + K nodes; prompt node k has id N + k. Labels, when
/// present, are extended with -1 for prompt nodes.
Graph apply_subgraph_prompt(const Graph& g, const SubgraphPrompt& p);
Graph apply_hybrid_prompt(const Graph& g, const Hybrid& p);
Graph apply_gdp(const Graph& g, const GdpSpec& spec);

/// Gradients w.r.t. the prompted graph handed to the backbone.
struct GraphGradient {
  Mat node_feat;
  Mat edge_feat;
  std::vector<double> edge_weight;
};

/// Chain rule from the prompted graph back to the prompt parameters. The
/// result holds gradients in the same alternative and layout as `spec`.
GdpSpec gdp_backward(const Graph& g, const GdpSpec& spec, const GraphGradient& grad);

/// Mutable views over every trainable scalar of the spec (tau and topology
/// excluded), in a fixed order.
std::vector<std::span<double>> gdp_parameters(GdpSpec& spec);

nlohmann::json gdp_to_json(const GdpSpec& spec);
GdpSpec gdp_from_json(const nlohmann::json& doc, const std::string& ptr = "");

}  // namespace gmp
