#include "gmp/equivalence.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "gmp/error.hpp"

namespace gmp {

namespace {

MessagePrompt translate(const Graph& g, const GdpSpec& spec, TranslatorMutant mutant) {
  if (mutant == TranslatorMutant::DropMask) {
    Graph unit = g;
    std::fill(unit.edge_weight.begin(), unit.edge_weight.end(), 1.0);
    GdpSpec unmasked = spec;
    // Subgraph prompts carry their own link weights A^p.
    if (auto* sub = std::get_if<SubgraphPrompt>(&unmasked)) {
      std::fill(sub->link_weight.begin(), sub->link_weight.end(), 1.0);
    }
    return gdp_to_gmp(unit, g.node_feat, unmasked);
  }
  return gdp_to_gmp(g, g.node_feat, spec);
}

std::vector<double> gaussian(Rng& rng, std::size_t n, double stddev = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = stddev * rng.normal();
  return v;
}

double uniform_in(Rng& rng, double lo, double hi) { return lo + (hi - lo) * rng.uniform(); }

std::vector<double> uniform_vec(Rng& rng, std::size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (double& x : v) x = uniform_in(rng, lo, hi);
  return v;
}

Mat basis(Rng& rng, std::size_t width) { return randn(rng, 1 + rng.uniform_index(4), width, 1.0); }

SubgraphPrompt random_subgraph(Rng& rng, const Graph& g) {
  SubgraphPrompt p;
  const std::size_t K = 1 + rng.uniform_index(3);
  p.Hp = randn(rng, K, g.node_dim(), 1.0);
  for (NodeId v = 0; v < g.num_nodes; ++v) {
    for (std::size_t k = 0; k < K; ++k) {
      if (rng.uniform() < 0.4) p.links.emplace_back(v, k);
    }
  }
  p.link_weight = uniform_vec(rng, p.links.size(), 0.2, 2.0);
  p.link_feat = randn(rng, p.links.size(), g.edge_dim(), 1.0);
  if (K > 1) p.internal_edges.emplace_back(0, 1);
  return p;
}

/// The prompt families exercised by one proposition, keyed by variant name.
std::vector<std::pair<std::string, GdpSpec>> sample_specs(Proposition prop, Rng& rng, const Graph& g) {
  const std::size_t dv = g.node_dim();
  const std::size_t de = g.edge_dim();
  std::vector<std::pair<std::string, GdpSpec>> out;
  switch (prop) {
    case Proposition::NodeFeature:
      out.emplace_back("single", NodeSingle{gaussian(rng, dv)});
      out.emplace_back("multi", NodeMulti{basis(rng, dv), uniform_in(rng, 0.5, 2.0)});
      break;
    case Proposition::EdgeFeature:
      if (de == 0) break;
      out.emplace_back("single", EdgeSingle{gaussian(rng, de)});
      out.emplace_back("multi", EdgeMulti{basis(rng, de), uniform_in(rng, 0.5, 2.0)});
      break;
    case Proposition::EdgeWeight:
      out.emplace_back("add", EdgeWeightAdd{uniform_vec(rng, g.num_edges(), -1.0, 2.0)});
      out.emplace_back("mul", EdgeWeightMul{uniform_vec(rng, g.num_edges(), -1.0, 2.0)});
      break;
    case Proposition::Subgraph:
      out.emplace_back("subgraph", random_subgraph(rng, g));
      break;
    case Proposition::Hybrid:
      out.emplace_back("hybrid", Hybrid{basis(rng, dv), uniform_in(rng, 0.5, 2.0), uniform_vec(rng, g.num_edges(), -1.0, 2.0)});
      break;
  }
  return out;
}

}  // namespace

Graph random_graph(Rng& rng, std::size_t min_nodes, std::size_t max_nodes, std::size_t max_node_dim,
                   std::size_t max_edge_dim) {
  if (min_nodes == 0 || min_nodes > max_nodes) throw ParameterError("random_graph: invalid node range");
  const std::size_t n = min_nodes + rng.uniform_index(max_nodes - min_nodes + 1);
  const std::size_t dv = 1 + rng.uniform_index(max_node_dim);
  const std::size_t de = rng.uniform_index(max_edge_dim + 1);
  const bool directed = rng.uniform() < 0.5;
  const double density = uniform_in(rng, 0.02, 0.4);
  std::vector<EdgeInput> edges;
  for (NodeId u = 0; u < n; ++u) {
    for (NodeId v = directed ? 0 : u; v < n; ++v) {
      if (rng.uniform() < density) edges.push_back({u, v});
    }
  }
  Mat feat = randn(rng, n, dv, 1.0);
  Mat efeat = randn(rng, edges.size(), de, 1.0);
  auto weights = uniform_vec(rng, edges.size(), 0.2, 2.0);
  return directed ? from_edge_list(n, edges, std::move(feat), std::move(efeat), std::move(weights), true)
                  : from_undirected_edge_list(n, edges, std::move(feat), std::move(efeat), std::move(weights));
}

InstanceCheck check_instance(const Graph& g, const GdpSpec& spec, TranslatorMutant mutant) {
  const MessageFn fn = ConcatMpnn{};
  const Graph prompted = apply_gdp(g, spec);
  const MessageMatrix base = build_messages(g, g.node_feat, fn);
  const MessagePrompt P = translate(g, spec, mutant);
  const MessageMatrix shifted = apply_gmp(base, P);

  InstanceCheck out;
  if (!P.aggregation_level) {
    const MessageMatrix direct = build_messages(prompted, prompted.node_feat, fn);
    out.max_abs_diff = max_abs_diff(direct.mat, shifted.mat);
    out.comparisons = direct.mat.size();
    return out;
  }
  const Mat lhs = aggregate(prompted, build_messages(prompted, prompted.node_feat, fn).mat);
  const Mat rhs = aggregate(g, shifted.mat);
  out.skipped_nodes = P.uncovered_nodes;
  std::vector<bool> skip(g.num_nodes, false);
  for (NodeId v : P.uncovered_nodes) skip[v] = true;
  for (NodeId v = 0; v < g.num_nodes; ++v) {
    if (skip[v]) continue;
    for (std::size_t c = 0; c < rhs.cols(); ++c) {
      out.max_abs_diff = std::max(out.max_abs_diff, std::abs(lhs(v, c) - rhs(v, c)));
      ++out.comparisons;
    }
  }
  return out;
}

EquivReport verify_proposition(Proposition prop, const VerifyConfig& cfg) {
  if (cfg.trials == 0) throw ParameterError("verify: trials must be at least 1");
  if (!(cfg.tolerance >= 0.0)) throw ParameterError("verify: tolerance must be non-negative");
  EquivReport rep;
  rep.proposition = static_cast<int>(prop);
  rep.trials = cfg.trials;
  rep.tolerance = cfg.tolerance;
  rep.seed = cfg.seed;
  const Rng root(cfg.seed);
  for (std::size_t t = 0; t < cfg.trials; ++t) {
    Rng rng = root.split(static_cast<std::uint64_t>(prop) * 1'000'003ULL + t);
    // Edge feature prompts need d_E >= 1.
    const std::size_t max_de = 4;
    Graph g = random_graph(rng, cfg.min_nodes, cfg.max_nodes, 6, max_de);
    while (prop == Proposition::EdgeFeature && g.edge_dim() == 0) g = random_graph(rng, cfg.min_nodes, cfg.max_nodes, 6, max_de);
    for (const auto& [name, spec] : sample_specs(prop, rng, g)) {
      const auto check = check_instance(g, spec, cfg.mutant);
      rep.comparisons += check.comparisons;
      rep.max_abs_diff = std::max(rep.max_abs_diff, check.max_abs_diff);
      auto& slot = rep.variants[name];
      slot = std::max(slot, check.max_abs_diff);
      for (NodeId v : check.skipped_nodes) rep.skipped_nodes.push_back({t, v});
    }
  }
  rep.pass = rep.max_abs_diff < cfg.tolerance || (cfg.tolerance == 0.0 && rep.max_abs_diff == 0.0);
  return rep;
}

std::vector<EquivReport> verify_all(const VerifyConfig& cfg) {
  std::vector<EquivReport> out;
  for (auto prop : {Proposition::NodeFeature, Proposition::EdgeFeature, Proposition::EdgeWeight, Proposition::Subgraph,
                    Proposition::Hybrid}) {
    out.push_back(verify_proposition(prop, cfg));
  }
  return out;
}

nlohmann::json report_to_json(const EquivReport& r) {
  nlohmann::json skipped = nlohmann::json::array();
  for (const auto& s : r.skipped_nodes) skipped.push_back({{"trial", s.trial}, {"node", s.node}});
  return {
      {"proposition", r.proposition},
      {"trials", r.trials},
      {"comparisons", r.comparisons},
      {"max_abs_diff", r.max_abs_diff},
      {"tolerance", r.tolerance},
      {"pass", r.pass},
      {"variants", r.variants},
      {"skipped_nodes", std::move(skipped)},
      {"seed", r.seed},
  };
}

}  // namespace gmp
