#include "gmp/prompt_zoo.hpp"

#include <algorithm>

#include <nlohmann/json.hpp>

#include "gmp/error.hpp"
#include "gmp/json_util.hpp"
#include "gmp/kernels.hpp"

namespace gmp {

using nlohmann::json;

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};

void require_dim(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    throw ShapeError(std::string(what) + " has width " + std::to_string(got) + ", expected " + std::to_string(want));
  }
}

void require_tau(double tau) {
  if (!(tau > 0.0)) throw ParameterError("tau must be positive, got " + std::to_string(tau));
}

void require_edge_features(const Graph& g, const char* family) {
  if (g.edge_dim() == 0) throw UnsupportedError(std::string(family) + " prompt needs edge features (d_E >= 1)");
}

void add_to_rows(Mat& X, std::span<const double> v) {
  for (std::size_t r = 0; r < X.rows(); ++r) kernels::row_accumulate(v.size(), v.data(), X.row(r).data());
}

std::vector<double> column_sums(const Mat& X) {
  std::vector<double> out(X.cols(), 0.0);
  for (std::size_t r = 0; r < X.rows(); ++r) kernels::row_accumulate(X.cols(), X.row(r).data(), out.data());
  return out;
}

/// X + softmax(X Bᵀ / tau) B
Mat add_assigned_basis(const Mat& X, const Mat& B, double tau) {
  require_tau(tau);
  if (B.rows() == 0) throw ParameterError("basis prompt needs at least one row");
  return add(X, matmul(assignment(X, B, tau), B));
}

/// Gradient w.r.t. B of Out = X + softmax(X Bᵀ / tau) B.
Mat assigned_basis_backward(const Mat& X, const Mat& B, double tau, const Mat& d_out) {
  const Mat alpha = assignment(X, B, tau);
  Mat d_basis = matmul_tn(alpha, d_out);
  const Mat d_alpha = matmul_nt(d_out, B);
  Mat d_logits(alpha.rows(), alpha.cols());
  for (std::size_t i = 0; i < alpha.rows(); ++i) {
    double inner = 0.0;
    for (std::size_t j = 0; j < alpha.cols(); ++j) inner += alpha(i, j) * d_alpha(i, j);
    for (std::size_t j = 0; j < alpha.cols(); ++j) d_logits(i, j) = alpha(i, j) * (d_alpha(i, j) - inner) / tau;
  }
  axpy(d_basis, 1.0, matmul_tn(d_logits, X));
  return d_basis;
}

/// Per-edge weight prompts may break the pairing of an undirected graph; the
/// result is then treated as directed.
void keep_undirected_if_symmetric(Graph& g) {
  if (g.directed) return;
  const auto src = g.sources();
  for (EdgeId e = 0; e < g.num_edges(); ++e) {
    if (g.edge_weight[*g.find_edge(g.dst[e], src[e])] != g.edge_weight[e]) {
      g.directed = true;
      return;
    }
  }
}

void check_weight_prompt(const Graph& g, const std::vector<double>& S) {
  if (S.size() != g.num_edges()) {
    throw ShapeError("edge weight prompt has " + std::to_string(S.size()) + " entries for " +
                     std::to_string(g.num_edges()) + " edges");
  }
}

void check_subgraph(const Graph& g, const SubgraphPrompt& p) {
  const std::size_t K = p.num_prompt_nodes();
  if (K > 0) require_dim(p.Hp.cols(), g.node_dim(), "subgraph prompt Hp");
  if (p.link_weight.size() != p.links.size()) throw ShapeError("subgraph prompt: link_weight length differs from links");
  if (p.link_feat.rows() != p.links.size() || p.link_feat.cols() != g.edge_dim()) {
    throw ShapeError("subgraph prompt: link_feat " + p.link_feat.shape_string() + " should be " +
                     std::to_string(p.links.size()) + "x" + std::to_string(g.edge_dim()));
  }
  for (auto [v, k] : p.links) {
    if (v >= g.num_nodes) throw ParameterError("subgraph prompt: link target " + std::to_string(v) + " is not a node");
    if (k >= K) throw ParameterError("subgraph prompt: link source " + std::to_string(k) + " is not a prompt node");
  }
  for (auto [a, b] : p.internal_edges) {
    if (a >= K || b >= K) throw ParameterError("subgraph prompt: internal edge references a missing prompt node");
  }
}

}  // namespace

std::string gdp_kind(const GdpSpec& spec) {
  static constexpr const char* names[] = {"node_single",     "node_multi",      "edge_single", "edge_multi",
                                          "edge_weight_add", "edge_weight_mul", "subgraph",    "hybrid"};
  return names[spec.index()];
}

Mat assignment(const Mat& X, const Mat& B, double tau) {
  if (X.cols() != B.cols()) {
    throw ShapeError("assignment: inputs " + X.shape_string() + " and basis " + B.shape_string() + " differ in width");
  }
  return row_softmax(matmul_nt(X, B), tau);
}

Graph apply_node_prompt(const Graph& g, const NodeSingle& p) {
  require_dim(p.z.size(), g.node_dim(), "node prompt z");
  Graph out = g;
  add_to_rows(out.node_feat, p.z);
  return out;
}

Graph apply_node_prompt(const Graph& g, const NodeMulti& p) {
  require_dim(p.Z.cols(), g.node_dim(), "node prompt Z");
  Graph out = g;
  out.node_feat = add_assigned_basis(g.node_feat, p.Z, p.tau);
  return out;
}

Graph apply_edge_feature_prompt(const Graph& g, const EdgeSingle& p) {
  require_edge_features(g, "edge feature");
  require_dim(p.f.size(), g.edge_dim(), "edge prompt f");
  Graph out = g;
  add_to_rows(out.edge_feat, p.f);
  return out;
}

Graph apply_edge_feature_prompt(const Graph& g, const EdgeMulti& p) {
  require_edge_features(g, "edge feature");
  require_dim(p.F.cols(), g.edge_dim(), "edge prompt F");
  Graph out = g;
  out.edge_feat = add_assigned_basis(g.edge_feat, p.F, p.tau);
  return out;
}

Graph apply_edge_weight_prompt(const Graph& g, const EdgeWeightAdd& p) {
  check_weight_prompt(g, p.S);
  Graph out = g;
  for (EdgeId e = 0; e < g.num_edges(); ++e) out.edge_weight[e] = g.edge_weight[e] + p.S[e];
  keep_undirected_if_symmetric(out);
  return out;
}

Graph apply_edge_weight_prompt(const Graph& g, const EdgeWeightMul& p) {
  check_weight_prompt(g, p.S);
  Graph out = g;
  for (EdgeId e = 0; e < g.num_edges(); ++e) out.edge_weight[e] = g.edge_weight[e] * p.S[e];
  keep_undirected_if_symmetric(out);
  return out;
}

Graph apply_subgraph_prompt(const Graph& g, const SubgraphPrompt& p) {
  check_subgraph(g, p);
  const std::size_t K = p.num_prompt_nodes();
  if (K == 0) return g;
  const std::size_t n = g.num_nodes;

  Mat feat(n + K, g.node_dim());
  std::copy(g.node_feat.values().begin(), g.node_feat.values().end(), feat.values().begin());
  std::copy(p.Hp.values().begin(), p.Hp.values().end(), feat.values().begin() + static_cast<std::ptrdiff_t>(g.node_feat.size()));

  std::vector<EdgeInput> edges;
  std::vector<double> weights = g.edge_weight;
  Mat efeat(g.num_edges() + p.links.size(), g.edge_dim());
  const auto src = g.sources();
  for (EdgeId e = 0; e < g.num_edges(); ++e) {
    edges.push_back({src[e], g.dst[e]});
    std::copy(g.edge_feat.row(e).begin(), g.edge_feat.row(e).end(), efeat.row(e).begin());
  }
  for (std::size_t l = 0; l < p.links.size(); ++l) {
    edges.push_back({n + p.links[l].second, p.links[l].first});
    weights.push_back(p.link_weight[l]);
    std::copy(p.link_feat.row(l).begin(), p.link_feat.row(l).end(), efeat.row(g.num_edges() + l).begin());
  }
  const bool directed = g.directed || !p.links.empty();
  Graph out = from_edge_list(n + K, edges, std::move(feat), std::move(efeat), std::move(weights), directed);
  if (g.labels) {
    out.labels = g.labels;
    out.labels->resize(n + K, -1);
  }
  return out;
}

Graph apply_hybrid_prompt(const Graph& g, const Hybrid& p) {
  return apply_edge_weight_prompt(apply_node_prompt(g, NodeMulti{p.Z, p.tau}), EdgeWeightMul{p.S});
}

Graph apply_gdp(const Graph& g, const GdpSpec& spec) {
  return std::visit(Overloaded{
                        [&](const NodeSingle& p) { return apply_node_prompt(g, p); },
                        [&](const NodeMulti& p) { return apply_node_prompt(g, p); },
                        [&](const EdgeSingle& p) { return apply_edge_feature_prompt(g, p); },
                        [&](const EdgeMulti& p) { return apply_edge_feature_prompt(g, p); },
                        [&](const EdgeWeightAdd& p) { return apply_edge_weight_prompt(g, p); },
                        [&](const EdgeWeightMul& p) { return apply_edge_weight_prompt(g, p); },
                        [&](const SubgraphPrompt& p) { return apply_subgraph_prompt(g, p); },
                        [&](const Hybrid& p) { return apply_hybrid_prompt(g, p); },
                    },
                    spec);
}

GdpSpec gdp_backward(const Graph& g, const GdpSpec& spec, const GraphGradient& grad) {
  return std::visit(
      Overloaded{
          [&](const NodeSingle&) -> GdpSpec { return NodeSingle{column_sums(grad.node_feat)}; },
          [&](const NodeMulti& p) -> GdpSpec {
            return NodeMulti{assigned_basis_backward(g.node_feat, p.Z, p.tau, grad.node_feat), p.tau};
          },
          [&](const EdgeSingle&) -> GdpSpec { return EdgeSingle{column_sums(grad.edge_feat)}; },
          [&](const EdgeMulti& p) -> GdpSpec {
            return EdgeMulti{assigned_basis_backward(g.edge_feat, p.F, p.tau, grad.edge_feat), p.tau};
          },
          [&](const EdgeWeightAdd&) -> GdpSpec { return EdgeWeightAdd{grad.edge_weight}; },
          [&](const EdgeWeightMul&) -> GdpSpec {
            std::vector<double> dS(g.num_edges());
            for (EdgeId e = 0; e < g.num_edges(); ++e) dS[e] = grad.edge_weight[e] * g.edge_weight[e];
            return EdgeWeightMul{std::move(dS)};
          },
          [&](const SubgraphPrompt& p) -> GdpSpec {
            SubgraphPrompt d;
            const std::size_t n = g.num_nodes;
            const std::size_t K = p.num_prompt_nodes();
            d.Hp = Mat(K, g.node_dim());
            d.links = p.links;
            d.internal_edges = p.internal_edges;
            d.link_weight.assign(p.links.size(), 0.0);
            d.link_feat = Mat(p.links.size(), g.edge_dim());
            if (K == 0) return d;
            for (std::size_t k = 0; k < K; ++k) {
              auto from = grad.node_feat.row(n + k);
              std::copy(from.begin(), from.end(), d.Hp.row(k).begin());
            }
            // Edge indices in the union graph are recovered from the prompted
            // graph's layout, which depends only on the topology.
            const Graph un = apply_subgraph_prompt(g, p);
            for (std::size_t l = 0; l < p.links.size(); ++l) {
              const EdgeId e = *un.find_edge(n + p.links[l].second, p.links[l].first);
              d.link_weight[l] = grad.edge_weight[e];
              auto from = grad.edge_feat.row(e);
              std::copy(from.begin(), from.end(), d.link_feat.row(l).begin());
            }
            return d;
          },
          [&](const Hybrid& p) -> GdpSpec {
            Hybrid d;
            d.tau = p.tau;
            d.Z = assigned_basis_backward(g.node_feat, p.Z, p.tau, grad.node_feat);
            d.S.resize(g.num_edges());
            for (EdgeId e = 0; e < g.num_edges(); ++e) d.S[e] = grad.edge_weight[e] * g.edge_weight[e];
            return d;
          },
      },
      spec);
}

std::vector<std::span<double>> gdp_parameters(GdpSpec& spec) {
  return std::visit(Overloaded{
                        [](NodeSingle& p) { return std::vector<std::span<double>>{p.z}; },
                        [](NodeMulti& p) { return std::vector<std::span<double>>{p.Z.values()}; },
                        [](EdgeSingle& p) { return std::vector<std::span<double>>{p.f}; },
                        [](EdgeMulti& p) { return std::vector<std::span<double>>{p.F.values()}; },
                        [](EdgeWeightAdd& p) { return std::vector<std::span<double>>{p.S}; },
                        [](EdgeWeightMul& p) { return std::vector<std::span<double>>{p.S}; },
                        [](SubgraphPrompt& p) {
                          return std::vector<std::span<double>>{p.Hp.values(), p.link_weight, p.link_feat.values()};
                        },
                        [](Hybrid& p) { return std::vector<std::span<double>>{p.Z.values(), p.S}; },
                    },
                    spec);
}

// ---------------------------------------------------------------- JSON

json gdp_to_json(const GdpSpec& spec) {
  json doc;
  doc["kind"] = gdp_kind(spec);
  std::visit(Overloaded{
                 [&](const NodeSingle& p) { doc["z"] = p.z; },
                 [&](const NodeMulti& p) {
                   doc["Z"] = p.Z.to_rows();
                   doc["tau"] = p.tau;
                 },
                 [&](const EdgeSingle& p) { doc["f"] = p.f; },
                 [&](const EdgeMulti& p) {
                   doc["F"] = p.F.to_rows();
                   doc["tau"] = p.tau;
                 },
                 [&](const EdgeWeightAdd& p) { doc["S"] = p.S; },
                 [&](const EdgeWeightMul& p) { doc["S"] = p.S; },
                 [&](const SubgraphPrompt& p) {
                   doc["Hp"] = p.Hp.to_rows();
                   doc["links"] = p.links;
                   doc["link_weights"] = p.link_weight;
                   doc["link_features"] = p.link_feat.to_rows();
                   doc["internal_edges"] = p.internal_edges;
                 },
                 [&](const Hybrid& p) {
                   doc["Z"] = p.Z.to_rows();
                   doc["tau"] = p.tau;
                   doc["S"] = p.S;
                 },
             },
             spec);
  return doc;
}

GdpSpec gdp_from_json(const json& doc, const std::string& ptr) {
  using namespace json_util;
  const auto& kind_v = require_field(doc, ptr, "kind");
  if (!kind_v.is_string()) throw ParseError(ptr + "/kind", "expected string");
  const std::string kind = kind_v.get<std::string>();
  auto tau = [&]() { return doc.contains("tau") ? require_number(doc["tau"], ptr + "/tau") : 1.0; };
  auto vec = [&](const char* key) { return read_vector(require_field(doc, ptr, key), ptr + "/" + key); };
  auto mat = [&](const char* key) { return read_matrix(require_field(doc, ptr, key), ptr + "/" + key); };
  auto pairs = [&](const char* key) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    if (!doc.contains(key)) return out;
    const std::string p = ptr + "/" + key;
    const auto& arr = require_array(doc[key], p);
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string pi = p + "/" + std::to_string(i);
      if (!arr[i].is_array() || arr[i].size() != 2) throw ParseError(pi, "expected [a, b]");
      out.emplace_back(require_index(arr[i][0], pi + "/0"), require_index(arr[i][1], pi + "/1"));
    }
    return out;
  };

  if (kind == "node_single") return NodeSingle{vec("z")};
  if (kind == "node_multi") return NodeMulti{mat("Z"), tau()};
  if (kind == "edge_single") return EdgeSingle{vec("f")};
  if (kind == "edge_multi") return EdgeMulti{mat("F"), tau()};
  if (kind == "edge_weight_add") return EdgeWeightAdd{vec("S")};
  if (kind == "edge_weight_mul") return EdgeWeightMul{vec("S")};
  if (kind == "hybrid") return Hybrid{mat("Z"), tau(), vec("S")};
  if (kind == "subgraph") {
    SubgraphPrompt p;
    p.Hp = mat("Hp");
    p.links = pairs("links");
    p.link_weight = doc.contains("link_weights") ? vec("link_weights") : std::vector<double>(p.links.size(), 1.0);
    p.link_feat = doc.contains("link_features") ? read_matrix(doc["link_features"], ptr + "/link_features", p.links.size())
                                                : Mat(p.links.size(), 0);
    p.internal_edges = pairs("internal_edges");
    return p;
  }
  throw ParseError(ptr + "/kind", "unknown prompt kind '" + kind + "'");
}

}  // namespace gmp
