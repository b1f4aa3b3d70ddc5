#pragma once

// Graph message prompts: additive offsets on the message matrix, their
// low-rank and conditional parameterizations, and constructive translations
// of every graph data prompt into an equivalent message prompt.

#include <vector>

#include "gmp/dense.hpp"
#include "gmp/graph.hpp"
#include "gmp/message.hpp"
#include "gmp/prompt_zoo.hpp"

namespace gmp {

struct MessagePrompt {
  Mat mat;
  /// Set for subgraph translations, which only hold after sum aggregation.
  bool aggregation_level = false;
  /// Nodes receiving prompt links but no original edge; the translation
  /// cannot reproduce their update.
  std::vector<NodeId> uncovered_nodes;
};

/// P = U Vᵀ with U: |E| x r and V: (d_V + d_E) x r.
struct LowRankPrompt {
  Mat U;
  Mat V;

  std::size_t rank() const noexcept { return V.cols(); }
};

/// U = M W, so P = M W Vᵀ. W and V are (d_V + d_E) x r.
struct ConditionalPrompt {
  Mat W;
  Mat V;
};

MessageMatrix apply_gmp(const MessageMatrix& M, const MessagePrompt& P);
MessagePrompt lr_expand(const LowRankPrompt& p);
Mat conditional_u(const MessageMatrix& M, const ConditionalPrompt& c);

/// Message prompt reproducing `spec` under the ConcatMpnn message
/// A_vu [H_u || E_vu]. `H` plays the role of g.node_feat.
MessagePrompt gdp_to_gmp(const Graph& g, const Mat& H, const GdpSpec& spec);

}  // namespace gmp
