#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <tuple>

#include "gmp/backbone.hpp"
#include "gmp/equivalence.hpp"
#include "gmp/error.hpp"
#include "gmp/gradcheck.hpp"
#include "oracles.hpp"

using namespace gmp;
using Eigen::MatrixXd;

namespace {

struct OracleEdge {
  std::size_t src, dst;
  double w;
  Eigen::VectorXd feat;
};

// Straight-line forward pass written against dense Eigen algebra. It
// rebuilds the self-looped edge list and the normalization from scratch.
MatrixXd oracle_forward(const BackboneSpec& bb, const Graph& g, const PromptState& prompt, const Head& head, Task task) {
  const std::size_t n = g.num_nodes, de = bb.edge_dim;
  std::vector<OracleEdge> edges;
  const auto src = g.sources();
  std::vector<bool> has_loop(n, false);
  for (EdgeId e = 0; e < g.num_edges(); ++e) {
    Eigen::VectorXd f(de);
    for (std::size_t j = 0; j < de; ++j) f(j) = g.edge_feat(e, j);
    edges.push_back({src[e], g.dst[e], g.edge_weight[e], f});
    if (src[e] == g.dst[e]) has_loop[src[e]] = true;
  }
  if (bb.self_loops)
    for (std::size_t v = 0; v < n; ++v)
      if (!has_loop[v]) edges.push_back({v, v, 1.0, Eigen::VectorXd::Zero(de)});
  std::sort(edges.begin(), edges.end(),
            [](const OracleEdge& a, const OracleEdge& b) { return std::tie(a.src, a.dst) < std::tie(b.src, b.dst); });

  std::vector<double> coeff(edges.size());
  if (bb.kind == LayerKind::Gcn) {
    Eigen::VectorXd deg = Eigen::VectorXd::Zero(n);
    for (const auto& e : edges) deg(e.dst) += e.w;
    for (std::size_t i = 0; i < edges.size(); ++i) {
      const double dv = deg(edges[i].dst), du = deg(edges[i].src);
      coeff[i] = dv > 0 && du > 0 ? edges[i].w / std::sqrt(dv * du) : 0.0;
    }
  } else {
    for (std::size_t i = 0; i < edges.size(); ++i) coeff[i] = edges[i].w;
  }

  MatrixXd H = oracle::to_eigen(g.node_feat);
  for (std::size_t l = 0; l < bb.num_layers(); ++l) {
    const auto& lw = bb.layers[l];
    const std::size_t d = H.cols();
    MatrixXd M = MatrixXd::Zero(edges.size(), d + de);
    for (std::size_t i = 0; i < edges.size(); ++i) {
      M.row(i).head(d) = coeff[i] * H.row(edges[i].src);
      if (bb.kind != LayerKind::Gcn) M.row(i).tail(de) = coeff[i] * edges[i].feat.transpose();
    }
    if (l < prompt.layers.size() && prompt.layers[l]) {
      const auto& p = *prompt.layers[l];
      if (prompt.kind == PromptKind::LrGmp) M += oracle::to_eigen(p.U) * oracle::to_eigen(p.V).transpose();
      if (prompt.kind == PromptKind::ConditionalLrGmp)
        M += (M * oracle::to_eigen(p.W)) * oracle::to_eigen(p.V).transpose();
    }
    MatrixXd G = MatrixXd::Zero(n, d + de);
    for (std::size_t i = 0; i < edges.size(); ++i) G.row(edges[i].dst) += M.row(i);

    const Eigen::RowVectorXd b = Eigen::Map<const Eigen::RowVectorXd>(lw.b.data(), lw.b.size());
    MatrixXd Z;
    if (bb.kind == LayerKind::Gcn) {
      Z = (G * oracle::to_eigen(lw.W)).rowwise() + b;
    } else if (bb.kind == LayerKind::MpnnLinear) {
      Z = (H * oracle::to_eigen(lw.W_self) + G * oracle::to_eigen(lw.W)).rowwise() + b;
    } else {
      MatrixXd h = G;
      h.leftCols(d) += (1.0 + bb.gin_eps) * H;
      const MatrixXd inner = ((h * oracle::to_eigen(lw.W)).rowwise() + b).cwiseMax(0.0);
      const Eigen::RowVectorXd b2 = Eigen::Map<const Eigen::RowVectorXd>(lw.b2.data(), lw.b2.size());
      Z = (inner * oracle::to_eigen(lw.W2)).rowwise() + b2;
    }
    H = l + 1 < bb.num_layers() ? MatrixXd(Z.cwiseMax(0.0)) : Z;
  }
  if (task == Task::Graph) H = H.colwise().mean().eval();
  const Eigen::RowVectorXd hb = Eigen::Map<const Eigen::RowVectorXd>(head.b.data(), head.b.size());
  return (H * oracle::to_eigen(head.W)).rowwise() + hb;
}

BackboneSpec random_backbone(LayerKind kind, std::size_t d0, std::size_t de, Rng& rng) {
  BackboneSpec bb = init_backbone(kind, {d0, 4, 3}, de, rng.uniform() < 0.5, rng);
  bb.gin_eps = 0.3;
  for (auto& l : bb.layers) {
    for (auto& x : l.b) x = 0.2 * rng.normal();
    for (auto& x : l.b2) x = 0.2 * rng.normal();
  }
  return bb;
}

PromptState random_prompt(const BackboneSpec& bb, const Graph& g, PromptKind kind, Rng& rng) {
  PromptState p;
  p.kind = kind;
  const auto prepared = prepare_graph(bb, g);
  const std::size_t m = prepared->adjacency.graph.num_edges();
  for (std::size_t l = 0; l < bb.num_layers(); ++l) {
    if (l == 1) {
      p.layers.emplace_back();
      continue;
    }
    LayerPrompt lp;
    if (kind == PromptKind::LrGmp) lp.U = randn(rng, m, 2, 0.5);
    if (kind == PromptKind::ConditionalLrGmp) lp.W = randn(rng, bb.message_width(l), 2, 0.5);
    lp.V = randn(rng, bb.message_width(l), 2, 0.5);
    p.layers.push_back(lp);
  }
  return p;
}

Graph instance(Rng& rng) {
  for (;;) {
    Graph g = random_graph(rng, 3, 10, 3, 2);
    if (g.num_edges() > 0) return g;
  }
}

}  // namespace

TEST_SUITE("backbone") {

TEST_CASE("forward matches the straight-line oracle") {
  Rng rng(31);
  for (auto kind : {LayerKind::Gcn, LayerKind::Gin, LayerKind::MpnnLinear}) {
    for (auto pk : {PromptKind::None, PromptKind::LrGmp, PromptKind::ConditionalLrGmp}) {
      for (int t = 0; t < 4; ++t) {
        const Graph g = instance(rng);
        const BackboneSpec bb = random_backbone(kind, g.node_dim(), g.edge_dim(), rng);
        const PromptState p = random_prompt(bb, g, pk, rng);
        const Head head{randn(rng, 3, 2, 1.0), {0.1, -0.2}};
        for (auto task : {Task::Node, Task::Graph}) {
          const auto cache = forward(bb, g, p, head, task);
          const MatrixXd want = oracle_forward(bb, g, p, head, task);
          CAPTURE(to_string(kind));
          CHECK(max_abs_diff(cache.logits, oracle::from_eigen(want)) < 1e-12);
        }
      }
    }
  }
}

TEST_CASE("zero prompts are bitwise identical to no prompt") {
  Rng rng(32);
  for (auto kind : {LayerKind::Gcn, LayerKind::Gin, LayerKind::MpnnLinear}) {
    for (int t = 0; t < 5; ++t) {
      const Graph g = instance(rng);
      const BackboneSpec bb = random_backbone(kind, g.node_dim(), g.edge_dim(), rng);
      PromptState p = random_prompt(bb, g, PromptKind::LrGmp, rng);
      for (auto& l : p.layers)
        if (l) std::fill(l->U.values().begin(), l->U.values().end(), 0.0);
      const Head head{randn(rng, 3, 2, 1.0), {0.0, 0.0}};
      const Mat a = forward(bb, g, p, head).logits;
      const Mat b = forward(bb, g, PromptState{}, head).logits;
      REQUIRE(a.size() == b.size());
      CHECK(std::memcmp(a.values().data(), b.values().data(), a.size() * sizeof(double)) == 0);
    }
  }
}

TEST_CASE("zero weights give zero embeddings") {
  Rng rng(33);
  const Graph g = instance(rng);
  BackboneSpec bb = init_backbone(LayerKind::Gcn, {g.node_dim(), 3}, g.edge_dim(), true, rng);
  std::fill(bb.layers[0].W.values().begin(), bb.layers[0].W.values().end(), 0.0);
  const auto c = forward(bb, g, PromptState{}, Head{Mat(3, 2), {0, 0}});
  for (double v : c.embeddings.values()) CHECK(v == 0.0);
}

TEST_CASE("isolated node only sees its own features") {
  const Graph g = from_edge_list(1, {}, Mat::from_rows({{2, -1}}));
  Rng rng(34);
  BackboneSpec bb = init_backbone(LayerKind::MpnnLinear, {2, 3}, 0, false, rng);
  bb.layers[0].b = {0.5, 0.0, -0.5};
  const Head head{Mat::identity(3), {0, 0, 0}};
  const Mat logits = forward(bb, g, PromptState{}, head).logits;
  for (std::size_t j = 0; j < 3; ++j) {
    const double want = 2 * bb.layers[0].W_self(0, j) - bb.layers[0].W_self(1, j) + bb.layers[0].b[j];
    CHECK(logits(0, j) == doctest::Approx(want).epsilon(1e-15));
  }
}

TEST_CASE("gdp forward equals forward on the prompted graph") {
  Rng rng(35);
  const Graph g = instance(rng);
  const BackboneSpec bb = random_backbone(LayerKind::MpnnLinear, g.node_dim(), g.edge_dim(), rng);
  PromptState p;
  p.kind = PromptKind::Gdp;
  p.gdp = NodeSingle{std::vector<double>(g.node_dim(), 0.3)};
  const Head head{randn(rng, 3, 2, 1.0), {0, 0}};
  CHECK(forward(bb, g, p, head).logits == forward(bb, apply_gdp(g, *p.gdp), PromptState{}, head).logits);
  CHECK_THROWS_AS(forward(bb, prepare_graph(bb, g), p, head), ParameterError);
}

TEST_CASE("head bias gradient closed forms") {
  Rng rng(36);
  const Graph g = instance(rng);
  const BackboneSpec bb = random_backbone(LayerKind::Gcn, g.node_dim(), g.edge_dim(), rng);
  std::vector<int> labels(g.num_nodes);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 3);
  std::vector<NodeId> mask;
  for (NodeId v = 0; v < g.num_nodes; ++v) mask.push_back(v);

  // uniform logits
  const Head flat{Mat(3, 3), {0, 0, 0}};
  const auto c = forward(bb, g, PromptState{}, flat);
  const auto lg = loss_and_backward(bb, g, PromptState{}, flat, c, labels, mask);
  for (int k = 0; k < 3; ++k) {
    double want = 0.0;
    for (int y : labels) want += (1.0 / 3.0 - (y == k ? 1.0 : 0.0));
    want /= static_cast<double>(mask.size());
    CHECK(lg.grads.head.b[k] == doctest::Approx(want).epsilon(1e-14));
  }
  CHECK(lg.loss == doctest::Approx(std::log(3.0)).epsilon(1e-14));

  // saturated correct logits
  std::vector<int> zeros(g.num_nodes, 0);
  const Head sure{Mat(3, 3), {60, 0, 0}};
  const auto c2 = forward(bb, g, PromptState{}, sure);
  const auto sat = loss_and_backward(bb, g, PromptState{}, sure, c2, zeros, mask);
  CHECK(sat.loss < 1e-20);
  for (double v : sat.grads.head.b) CHECK(std::abs(v) < 1e-20);
  for (double v : sat.grads.head.W.values()) CHECK(std::abs(v) < 1e-20);
}

TEST_CASE("parameter names line up with views") {
  Rng rng(37);
  const Graph g = instance(rng);
  const BackboneSpec bb = random_backbone(LayerKind::Gin, g.node_dim(), g.edge_dim(), rng);
  PromptState p = random_prompt(bb, g, PromptKind::ConditionalLrGmp, rng);
  Head head{randn(rng, 3, 2, 1.0), {0, 0}};
  const auto names = parameter_names(p);
  CHECK(names.size() == parameter_views(p, head).size());
  CHECK(names.front() == "head.W");
  CHECK(std::find(names.begin(), names.end(), "layer0.W") != names.end());
  CHECK(std::find(names.begin(), names.end(), "layer1.V") == names.end());
}

TEST_CASE("backbone JSON round trip is exact") {
  Rng rng(38);
  for (auto kind : {LayerKind::Gcn, LayerKind::Gin, LayerKind::MpnnLinear}) {
    BackboneSpec bb = init_backbone(kind, {3, 128, 128, 2}, 1, true, rng);
    bb.gin_eps = 0.1;
    const std::string text = dump_backbone_json(bb);
    const BackboneSpec back = parse_backbone_json(text);
    CHECK(back == bb);
    CHECK(dump_backbone_json(back) == text);
  }
  CHECK_THROWS_AS(parse_backbone_json(R"({"layer_kind":"gat"})"), ParseError);
  CHECK_THROWS_AS(parse_layer_kind("gat"), ParameterError);
}

TEST_CASE("shape mismatches are rejected") {
  Rng rng(39);
  const Graph g = instance(rng);
  const BackboneSpec bb = random_backbone(LayerKind::Gcn, g.node_dim() + 1, g.edge_dim(), rng);
  CHECK_THROWS_AS(forward(bb, g, PromptState{}, Head{Mat(3, 2), {0, 0}}), ShapeError);
}

}  // TEST_SUITE

TEST_SUITE("gradcheck") {

TEST_CASE("relative error definition") {
  CHECK(relative_error(1.0, 1.0) == 0.0);
  CHECK(relative_error(1.0, -1.0) == 2.0);
  CHECK(relative_error(0.0, 1e-12) == doctest::Approx(1e-6));
  CHECK(relative_error(0.0, 1e-12, 1e-8) == doctest::Approx(1e-4));
}

TEST_CASE("LR-GMP on a two-layer GCN") {
  GradcheckConfig cfg;
  cfg.method = Method::LrGmp;
  cfg.layer_kind = LayerKind::Gcn;
  cfg.num_layers = 2;
  cfg.seed = 5;
  const auto rep = gradcheck(cfg);
  CHECK(rep.pass);
  CHECK(rep.max_rel_err < 1e-4);
  CHECK(rep.checked > 0);
}

TEST_CASE("conditional LR-GMP including the direct message path") {
  for (auto kind : {LayerKind::Gcn, LayerKind::Gin, LayerKind::MpnnLinear}) {
    GradcheckConfig cfg;
    cfg.method = Method::ConditionalLrGmp;
    cfg.layer_kind = kind;
    cfg.seed = 6;
    const auto rep = gradcheck(cfg);
    CAPTURE(to_string(kind));
    CHECK(rep.pass);
  }
}

TEST_CASE("graph data prompts and the graph task") {
  const Method methods[] = {Method::NodeSingle, Method::NodeMulti, Method::EdgeSingle, Method::EdgeMulti,
                            Method::EdgeWeightAdd, Method::EdgeWeightMul, Method::Subgraph, Method::Hybrid};
  for (auto m : methods) {
    GradcheckConfig cfg;
    cfg.method = m;
    cfg.layer_kind = LayerKind::MpnnLinear;
    cfg.seed = 7;
    const auto rep = gradcheck(cfg);
    CAPTURE(to_string(m));
    CHECK(rep.pass);
  }
  GradcheckConfig g;
  g.method = Method::ConditionalLrGmp;
  g.task = Task::Graph;
  g.seed = 8;
  CHECK(gradcheck(g).pass);
  g.method = Method::LrGmp;
  CHECK_THROWS_AS(gradcheck(g), ParameterError);
}

TEST_CASE("sign-flip mutant is caught") {
  GradcheckConfig cfg;
  cfg.seed = 5;
  cfg.mutant = GradMutant::SignFlip;
  const auto rep = gradcheck(cfg);
  CHECK_FALSE(rep.pass);
  CHECK(rep.max_rel_err == doctest::Approx(2.0).epsilon(1e-3));
}

}  // TEST_SUITE
