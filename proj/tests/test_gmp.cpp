#include <doctest.h>

#include <set>

#include <nlohmann/json.hpp>

#include "gmp/equivalence.hpp"
#include "gmp/error.hpp"
#include "gmp/gmp.hpp"
#include "oracles.hpp"

using namespace gmp;

TEST_SUITE("gmp") {

TEST_CASE("apply_gmp") {
  Rng rng(1);
  MessageMatrix M{randn(rng, 6, 4, 1.0), 3, 1};
  CHECK(apply_gmp(M, MessagePrompt{Mat(6, 4), false, {}}) == M);

  const MessagePrompt P{randn(rng, 6, 4, 1.0), false, {}};
  MessageMatrix Z{Mat(6, 4), 3, 1};
  CHECK(apply_gmp(Z, P).mat == P.mat);

  const auto out = apply_gmp(M, P);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 4; ++j) CHECK(out.mat(i, j) == M.mat(i, j) + P.mat(i, j));
  CHECK_THROWS_AS(apply_gmp(M, MessagePrompt{Mat(5, 4), false, {}}), ShapeError);
}

TEST_CASE("low-rank expansion") {
  Rng rng(2);
  const auto zero = lr_expand({Mat(5, 2), randn(rng, 3, 2, 1.0)});
  for (double v : zero.mat.values()) CHECK(v == 0.0);

  const auto outer = lr_expand({Mat::from_rows({{1}, {2}}), Mat::from_rows({{3}, {4}})});
  CHECK(outer.mat == Mat::from_rows({{3, 4}, {6, 8}}));

  for (int t = 0; t < 10; ++t) {
    const auto p = lr_expand({randn(rng, 8, 3, 1.0), randn(rng, 5, 3, 1.0)});
    CHECK(oracle::gram_rank(p.mat, 1e-6) <= 3);
    CHECK(numerical_rank(p.mat, 1e-8) <= 3);
  }
  CHECK_THROWS_AS(lr_expand({Mat(4, 2), Mat(3, 3)}), ShapeError);
}

TEST_CASE("conditional factor") {
  Rng rng(3);
  MessageMatrix M{randn(rng, 7, 4, 1.0), 4, 0};
  const Mat u0 = conditional_u(M, {Mat(4, 2), randn(rng, 4, 2, 1.0)});
  for (double v : u0.values()) CHECK(v == 0.0);

  // rows of M pick rows of W
  MessageMatrix sel{Mat::from_rows({{0, 1, 0, 0}, {0, 0, 0, 1}}), 4, 0};
  const Mat W = randn(rng, 4, 2, 1.0);
  const Mat u = conditional_u(sel, {W, Mat(4, 2)});
  CHECK(u(0, 0) == W(1, 0));
  CHECK(u(1, 1) == W(3, 1));

  const Mat W2 = randn(rng, 4, 3, 1.0);
  CHECK(max_abs_diff(conditional_u(M, {W2, Mat(4, 3)}), oracle::triple_loop(M.mat, W2)) < 1e-12);
}

TEST_CASE("translator hand cases") {
  // edge 0 -> 1, i.e. v = 1, u = 0
  const Graph g = from_edge_list(2, {{0, 1}}, Mat::from_rows({{1, 0}, {0, 0}}), Mat::from_rows({{3}}));
  const auto node = gdp_to_gmp(g, g.node_feat, NodeSingle{{0.4, -0.7}});
  CHECK(node.mat == Mat::from_rows({{0.4, -0.7, 0}}));

  const auto mul = gdp_to_gmp(g, g.node_feat, EdgeWeightMul{{1.0}});
  for (double v : mul.mat.values()) CHECK(v == 0.0);

  const auto hyb = gdp_to_gmp(g, g.node_feat, Hybrid{Mat(1, 2), 1.0, {2.0}});
  CHECK(hyb.mat == Mat::from_rows({{1, 0, 3}}));

  const Graph bare = from_edge_list(2, {{0, 1}}, Mat(2, 2));
  CHECK_THROWS_AS(gdp_to_gmp(bare, bare.node_feat, EdgeSingle{{1.0}}), UnsupportedError);
}

TEST_CASE("subgraph translation flags uncovered nodes") {
  // node 2 has no original in-edge but receives a prompt link
  const Graph g = from_edge_list(3, {{0, 1}}, Mat::from_rows({{1}, {2}, {3}}), Mat(1, 1));
  SubgraphPrompt sp;
  sp.Hp = Mat::from_rows({{5}});
  sp.links = {{1, 0}, {2, 0}};
  sp.link_weight = {1.0, 1.0};
  sp.link_feat = Mat(2, 1);
  const auto P = gdp_to_gmp(g, g.node_feat, sp);
  CHECK(P.aggregation_level);
  CHECK(P.uncovered_nodes == std::vector<NodeId>{2});
  const auto check = check_instance(g, sp);
  CHECK(check.skipped_nodes == std::vector<NodeId>{2});
  CHECK(check.max_abs_diff < 1e-12);
}

}  // TEST_SUITE

TEST_SUITE("equivalence") {

TEST_CASE("each proposition passes on random graphs") {
  VerifyConfig cfg;
  cfg.trials = 100;
  cfg.seed = 4;
  for (auto prop : {Proposition::NodeFeature, Proposition::EdgeFeature, Proposition::EdgeWeight,
                    Proposition::Subgraph, Proposition::Hybrid}) {
    const auto rep = verify_proposition(prop, cfg);
    CHECK(rep.pass);
    CHECK(rep.max_abs_diff < 1e-9);
    CHECK(rep.trials == 100);
    CHECK(rep.comparisons > 0);
  }
  const auto w = verify_proposition(Proposition::EdgeWeight, cfg);
  CHECK(w.variants.count("add") == 1);
  CHECK(w.variants.count("mul") == 1);
}

TEST_CASE("default config gives five passing reports") {
  VerifyConfig cfg;
  cfg.trials = 20;
  const auto reps = verify_all(cfg);
  REQUIRE(reps.size() == 5);
  for (const auto& r : reps) CHECK(r.pass);
}

TEST_CASE("zero tolerance is a strictness control") {
  VerifyConfig cfg;
  cfg.trials = 30;
  cfg.tolerance = 0.0;
  const auto rep = verify_proposition(Proposition::NodeFeature, cfg);
  CHECK(rep.pass == (rep.max_abs_diff == 0.0));
  CHECK_THROWS_AS(verify_proposition(Proposition::NodeFeature, VerifyConfig{10, 2, 30, -1.0, 0}), ParameterError);
}

TEST_CASE("drop-mask mutant fails every proposition") {
  VerifyConfig cfg;
  cfg.trials = 20;
  cfg.mutant = TranslatorMutant::DropMask;
  for (const auto& r : verify_all(cfg)) CHECK_FALSE(r.pass);
}

TEST_CASE("reports are deterministic and structurally valid") {
  VerifyConfig cfg;
  cfg.trials = 1;
  cfg.seed = 9;
  const auto a = verify_all(cfg);
  const auto b = verify_all(cfg);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(report_to_json(a[i]).dump() == report_to_json(b[i]).dump());
    const auto doc = report_to_json(a[i]);
    CHECK(doc.contains("max_abs_diff"));
    CHECK(doc.contains("skipped_nodes"));
    CHECK(doc["trials"] == 1);
  }
}

}  // TEST_SUITE
