#include "gmp/gmp.hpp"

#include "gmp/error.hpp"
#include "gmp/kernels.hpp"

namespace gmp {

namespace {

MessagePrompt message_level(Mat mat) {
  MessagePrompt p;
  p.mat = std::move(mat);
  return p;
}

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};

/// Row e = coeff[e] * [node_block(src e) || edge_block(e)]; either block may be
/// absent (zero).
Mat edge_rows(const Graph& g, std::size_t dv, std::span<const double> coeff, const Mat* node_block,
              const Mat* edge_block) {
  const std::size_t de = g.edge_dim();
  Mat out(g.num_edges(), dv + de);
  const auto src = g.sources();
  for (EdgeId e = 0; e < g.num_edges(); ++e) {
    double* row = out.row(e).data();
    if (node_block != nullptr) {
      const double* from = node_block->rows() == 1 ? node_block->row(0).data() : node_block->row(src[e]).data();
      kernels::row_scale(dv, coeff[e], from, row);
    }
    if (edge_block != nullptr) {
      const double* from = edge_block->rows() == 1 ? edge_block->row(0).data() : edge_block->row(e).data();
      kernels::row_scale(de, coeff[e], from, row + dv);
    }
  }
  return out;
}

}  // namespace

MessageMatrix apply_gmp(const MessageMatrix& M, const MessagePrompt& P) {
  if (M.mat.rows() != P.mat.rows() || M.mat.cols() != P.mat.cols()) {
    throw ShapeError("apply_gmp: messages " + M.mat.shape_string() + " vs prompt " + P.mat.shape_string());
  }
  return {add(M.mat, P.mat), M.d_v_span, M.d_e_span};
}

MessagePrompt lr_expand(const LowRankPrompt& p) {
  if (p.U.cols() != p.V.cols()) {
    throw ShapeError("lr_expand: U " + p.U.shape_string() + " and V " + p.V.shape_string() + " differ in rank");
  }
  return {matmul_nt(p.U, p.V), false, {}};
}

Mat conditional_u(const MessageMatrix& M, const ConditionalPrompt& c) {
  if (c.W.rows() != M.mat.cols()) {
    throw ShapeError("conditional_u: W " + c.W.shape_string() + " does not match message width " +
                     std::to_string(M.mat.cols()));
  }
  if (c.V.rows() != c.W.rows() || c.V.cols() != c.W.cols()) {
    throw ShapeError("conditional_u: V " + c.V.shape_string() + " must match W " + c.W.shape_string());
  }
  return matmul(M.mat, c.W);
}

MessagePrompt gdp_to_gmp(const Graph& g, const Mat& H, const GdpSpec& spec) {
  if (H.rows() != g.num_nodes) throw ShapeError("gdp_to_gmp: H must have one row per node");
  const std::size_t dv = H.cols();
  const std::size_t de = g.edge_dim();
  const std::vector<double>& A = g.edge_weight;
  auto require_edges = [&](const char* what) {
    if (de == 0) throw UnsupportedError(std::string(what) + " prompt needs edge features (d_E >= 1)");
  };
  auto require_width = [](std::size_t got, std::size_t want, const char* what) {
    if (got != want) throw ShapeError(std::string(what) + " width " + std::to_string(got) + " != " + std::to_string(want));
  };
  auto require_len = [&](const std::vector<double>& S) {
    if (S.size() != g.num_edges()) throw ShapeError("edge weight prompt length differs from |E|");
  };

  return std::visit(
      Overloaded{
          // A_vu [z || 0]
          [&](const NodeSingle& p) -> MessagePrompt {
            require_width(p.z.size(), dv, "z");
            const Mat z = Mat::row_vector(p.z);
            return message_level(edge_rows(g, dv, A, &z, nullptr));
          },
          // A_vu [Σ_j α_uj Z_j || 0]
          [&](const NodeMulti& p) -> MessagePrompt {
            require_width(p.Z.cols(), dv, "Z");
            const Mat shift = matmul(assignment(H, p.Z, p.tau), p.Z);
            return message_level(edge_rows(g, dv, A, &shift, nullptr));
          },
          // A_vu [0 || f]
          [&](const EdgeSingle& p) -> MessagePrompt {
            require_edges("edge feature");
            require_width(p.f.size(), de, "f");
            const Mat f = Mat::row_vector(p.f);
            return message_level(edge_rows(g, dv, A, nullptr, &f));
          },
          // A_vu [0 || Σ_j α_vu,j F_j]
          [&](const EdgeMulti& p) -> MessagePrompt {
            require_edges("edge feature");
            require_width(p.F.cols(), de, "F");
            const Mat shift = matmul(assignment(g.edge_feat, p.F, p.tau), p.F);
            return message_level(edge_rows(g, dv, A, nullptr, &shift));
          },
          // S_vu [H_u || E_vu]
          [&](const EdgeWeightAdd& p) -> MessagePrompt {
            require_len(p.S);
            return message_level(edge_rows(g, dv, p.S, &H, &g.edge_feat));
          },
          // (A_vu S_vu - A_vu) [H_u || E_vu]
          [&](const EdgeWeightMul& p) -> MessagePrompt {
            require_len(p.S);
            std::vector<double> delta(g.num_edges());
            for (EdgeId e = 0; e < g.num_edges(); ++e) delta[e] = A[e] * p.S[e] - A[e];
            return message_level(edge_rows(g, dv, delta, &H, &g.edge_feat));
          },
          // every incoming edge of v: (1/|N_v|) Σ_k A^p_vk [Hp_k || E^p_vk]
          [&](const SubgraphPrompt& p) -> MessagePrompt {
            const std::size_t K = p.num_prompt_nodes();
            if (K > 0) require_width(p.Hp.cols(), dv, "Hp");
            if (p.link_weight.size() != p.links.size() || p.link_feat.rows() != p.links.size() ||
                p.link_feat.cols() != de) {
              throw ShapeError("subgraph prompt link arrays do not match links / d_E");
            }
            Mat per_node(g.num_nodes, dv + de);
            std::vector<bool> linked(g.num_nodes, false);
            for (std::size_t l = 0; l < p.links.size(); ++l) {
              const auto [v, pk] = p.links[l];
              if (v >= g.num_nodes || pk >= K) throw ParameterError("subgraph prompt link out of range");
              double* row = per_node.row(v).data();
              kernels::row_axpy(dv, p.link_weight[l], p.Hp.row(pk).data(), row);
              kernels::row_axpy(de, p.link_weight[l], p.link_feat.row(l).data(), row + dv);
              linked[v] = true;
            }
            const auto deg = g.in_degree();
            MessagePrompt out{Mat(g.num_edges(), dv + de), true, {}};
            for (EdgeId e = 0; e < g.num_edges(); ++e) {
              const NodeId v = g.dst[e];
              kernels::row_scale(dv + de, 1.0 / static_cast<double>(deg[v]), per_node.row(v).data(), out.mat.row(e).data());
            }
            for (NodeId v = 0; v < g.num_nodes; ++v) {
              if (linked[v] && deg[v] == 0) out.uncovered_nodes.push_back(v);
            }
            return out;
          },
          // A_vu ((S_vu - 1) [H_u || E_vu] + S_vu [Z_u || 0])
          [&](const Hybrid& p) -> MessagePrompt {
            require_width(p.Z.cols(), dv, "Z");
            require_len(p.S);
            const Mat shift = matmul(assignment(H, p.Z, p.tau), p.Z);
            std::vector<double> reweight(g.num_edges()), scale_shift(g.num_edges());
            for (EdgeId e = 0; e < g.num_edges(); ++e) {
              reweight[e] = A[e] * (p.S[e] - 1.0);
              scale_shift[e] = A[e] * p.S[e];
            }
            Mat out = edge_rows(g, dv, reweight, &H, &g.edge_feat);
            axpy(out, 1.0, edge_rows(g, dv, scale_shift, &shift, nullptr));
            return message_level(std::move(out));
          },
      },
      spec);
}

}  // namespace gmp
