#pragma once

// Per-edge message construction and aggregation.

#include <variant>
#include <vector>

#include "gmp/dense.hpp"
#include "gmp/graph.hpp"

namespace gmp {

/// |E| x (d_V + d_E) message rows aligned to the canonical edge order of the
/// graph they were built on.
struct MessageMatrix {
  Mat mat;
  std::size_t d_v_span = 0;
  std::size_t d_e_span = 0;

  std::size_t width() const noexcept { return d_v_span + d_e_span; }
  bool operator==(const MessageMatrix&) const = default;
};

/// A_vu [H_u || E_vu]
struct ConcatMpnn {};
/// [Â_vu H_u || 0]; with self-loops the rows follow with_self_loops(graph).
struct GcnNorm {
  bool add_self_loops = false;
};
/// [α_vu H_u || 0], α = softmax over v's incoming edges of
/// LeakyReLU(aᵀ [W H_v || W H_u]). Forward only.
struct Attention {
  Mat W;
  std::vector<double> a;
  double slope = 0.2;
};

using MessageFn = std::variant<ConcatMpnn, GcnNorm, Attention>;

/// The graph whose edges index the rows produced by build_messages(g, ·, fn).
Graph message_graph(const Graph& g, const MessageFn& fn);

/// `H` stands in for g.node_feat so deeper layers can reuse the graph.
MessageMatrix build_messages(const Graph& g, const Mat& H, const MessageFn& fn);

enum class AggregateMode { Sum, Mean };

/// Row v is the sum (or mean) of the message rows whose destination is v,
/// accumulated in canonical edge order. Nodes without incoming edges get 0.
Mat aggregate(const Graph& g, const Mat& messages, AggregateMode mode = AggregateMode::Sum);

/// Transpose of sum aggregation: row e of the result is grad_nodes[dst(e)].
Mat scatter_to_edges(const Graph& g, const Mat& grad_nodes);

/// Per-edge attention weights; each destination's incoming weights sum to 1.
/// Nodes without incoming edges emit nothing.
std::vector<double> attention_coefficients(const Graph& g, const Mat& H, const Mat& W, std::span<const double> a,
                                           double slope);

}  // namespace gmp
