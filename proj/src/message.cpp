#include "gmp/message.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gmp/error.hpp"
#include "gmp/kernels.hpp"

namespace gmp {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};

void check_features(const Graph& g, const Mat& H) {
  if (H.rows() != g.num_nodes) {
    throw ShapeError("build_messages: H " + H.shape_string() + " does not have one row per node (" +
                     std::to_string(g.num_nodes) + ")");
  }
}

/// Rows [w_e * H_src(e) || 0] for a per-edge coefficient w.
MessageMatrix scaled_node_messages(const Graph& g, const Mat& H, std::span<const double> coeff) {
  MessageMatrix out{Mat(g.num_edges(), H.cols() + g.edge_dim()), H.cols(), g.edge_dim()};
  const auto src = g.sources();
  for (EdgeId e = 0; e < g.num_edges(); ++e) {
    kernels::row_scale(H.cols(), coeff[e], H.row(src[e]).data(), out.mat.row(e).data());
  }
  return out;
}

}  // namespace

Graph message_graph(const Graph& g, const MessageFn& fn) {
  if (const auto* gcn = std::get_if<GcnNorm>(&fn); gcn != nullptr && gcn->add_self_loops) {
    return with_self_loops(g).graph;
  }
  return g;
}

MessageMatrix build_messages(const Graph& g, const Mat& H, const MessageFn& fn) {
  check_features(g, H);
  return std::visit(
      Overloaded{
          [&](const ConcatMpnn&) {
            const std::size_t dv = H.cols();
            const std::size_t de = g.edge_dim();
            MessageMatrix out{Mat(g.num_edges(), dv + de), dv, de};
            const auto src = g.sources();
            for (EdgeId e = 0; e < g.num_edges(); ++e) {
              double* row = out.mat.row(e).data();
              kernels::row_scale(dv, g.edge_weight[e], H.row(src[e]).data(), row);
              kernels::row_scale(de, g.edge_weight[e], g.edge_feat.row(e).data(), row + dv);
            }
            return out;
          },
          [&](const GcnNorm& gcn) {
            const auto norm = symmetric_normalize(g, gcn.add_self_loops);
            return scaled_node_messages(norm.graph, H, norm.weight);
          },
          [&](const Attention& att) {
            const auto alpha = attention_coefficients(g, H, att.W, att.a, att.slope);
            return scaled_node_messages(g, H, alpha);
          },
      },
      fn);
}

Mat aggregate(const Graph& g, const Mat& messages, AggregateMode mode) {
  if (messages.rows() != g.num_edges()) {
    throw ShapeError("aggregate: " + messages.shape_string() + " messages for " + std::to_string(g.num_edges()) + " edges");
  }
  Mat out(g.num_nodes, messages.cols());
  for (EdgeId e = 0; e < g.num_edges(); ++e) {
    kernels::row_accumulate(messages.cols(), messages.row(e).data(), out.row(g.dst[e]).data());
  }
  if (mode == AggregateMode::Mean) {
    const auto deg = g.in_degree();
    for (NodeId v = 0; v < g.num_nodes; ++v) {
      if (deg[v] == 0) continue;
      auto row = out.row(v);
      kernels::row_scale(row.size(), 1.0 / static_cast<double>(deg[v]), row.data(), row.data());
    }
  }
  return out;
}

Mat scatter_to_edges(const Graph& g, const Mat& grad_nodes) {
  if (grad_nodes.rows() != g.num_nodes) throw ShapeError("scatter_to_edges: expected one row per node");
  Mat out(g.num_edges(), grad_nodes.cols());
  for (EdgeId e = 0; e < g.num_edges(); ++e) {
    auto from = grad_nodes.row(g.dst[e]);
    std::copy(from.begin(), from.end(), out.row(e).begin());
  }
  return out;
}

std::vector<double> attention_coefficients(const Graph& g, const Mat& H, const Mat& W, std::span<const double> a,
                                           double slope) {
  check_features(g, H);
  if (W.rows() != H.cols()) {
    throw ShapeError("attention: W " + W.shape_string() + " does not match feature width " + std::to_string(H.cols()));
  }
  if (a.size() != 2 * W.cols()) {
    throw ShapeError("attention: a has " + std::to_string(a.size()) + " entries, expected " + std::to_string(2 * W.cols()));
  }
  const Mat proj = matmul(H, W);
  const std::size_t dp = W.cols();
  // Split aᵀ[W H_v || W H_u] into a destination and a source score per node.
  std::vector<double> dst_score(g.num_nodes), src_score(g.num_nodes);
  for (NodeId v = 0; v < g.num_nodes; ++v) {
    dst_score[v] = kernels::row_dot(dp, a.data(), proj.row(v).data());
    src_score[v] = kernels::row_dot(dp, a.data() + dp, proj.row(v).data());
  }
  const auto src = g.sources();
  std::vector<double> logit(g.num_edges());
  std::vector<double> row_max(g.num_nodes, -std::numeric_limits<double>::infinity());
  for (EdgeId e = 0; e < g.num_edges(); ++e) {
    const double s = dst_score[g.dst[e]] + src_score[src[e]];
    logit[e] = s > 0.0 ? s : slope * s;
    row_max[g.dst[e]] = std::max(row_max[g.dst[e]], logit[e]);
  }
  std::vector<double> alpha(g.num_edges());
  std::vector<double> total(g.num_nodes, 0.0);
  for (EdgeId e = 0; e < g.num_edges(); ++e) {
    alpha[e] = std::exp(logit[e] - row_max[g.dst[e]]);
    total[g.dst[e]] += alpha[e];
  }
  for (EdgeId e = 0; e < g.num_edges(); ++e) alpha[e] /= total[g.dst[e]];
  return alpha;
}

}  // namespace gmp
