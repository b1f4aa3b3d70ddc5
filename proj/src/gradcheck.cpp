#include "gmp/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "gmp/error.hpp"

namespace gmp {

namespace {

constexpr std::size_t kClasses = 3;

bool needs_edge_features(Method m) { return m == Method::EdgeSingle || m == Method::EdgeMulti; }

struct Instance {
  BackboneSpec backbone;
  std::vector<Graph> graphs;
  std::vector<int> graph_labels;
  PromptState prompt;
  Head head;
};

Graph random_instance_graph(Rng& rng, std::size_t n, std::size_t dv, std::size_t de) {
  std::vector<EdgeInput> edges;
  const bool directed = rng.uniform() < 0.5;
  for (NodeId u = 0; u < n; ++u) {
    for (NodeId v = directed ? 0 : u + 1; v < n; ++v) {
      if (u != v && rng.uniform() < 0.35) edges.push_back({u, v});
    }
  }
  std::vector<double> w(edges.size());
  for (double& x : w) x = 0.5 + rng.uniform();
  Mat ef = randn(rng, edges.size(), de, 1.0);
  Graph g;
  if (directed) {
    g = from_edge_list(n, edges, randn(rng, n, dv, 1.0), ef, w, true);
  } else {
    g = from_undirected_edge_list(n, edges, randn(rng, n, dv, 1.0), ef, w);
  }
  std::vector<int> labels(n);
  for (auto& y : labels) y = static_cast<int>(rng.uniform_index(kClasses));
  g.labels = labels;
  return g;
}

Instance make_instance(const GradcheckConfig& cfg) {
  Rng rng(cfg.seed);
  Instance in;
  const std::size_t dv = 2 + rng.uniform_index(3);
  std::size_t de = rng.uniform_index(3);
  if (needs_edge_features(cfg.method) && de == 0) de = 1;
  std::vector<std::size_t> dims{dv};
  for (std::size_t l = 0; l < cfg.num_layers; ++l) dims.push_back(2 + rng.uniform_index(3));
  in.backbone = init_backbone(cfg.layer_kind, dims, de, rng.uniform() < 0.7, rng);
  for (auto& lw : in.backbone.layers) {
    for (double& b : lw.b) b = 0.3 * rng.normal();
    for (double& b : lw.b2) b = 0.3 * rng.normal();
  }
  if (cfg.layer_kind == LayerKind::Gin) in.backbone.gin_eps = 0.25 * rng.normal();

  const std::size_t num_graphs = cfg.task == Task::Graph ? 3 : 1;
  for (std::size_t i = 0; i < num_graphs; ++i) {
    in.graphs.push_back(random_instance_graph(rng, 4 + rng.uniform_index(9), dv, de));
    in.graph_labels.push_back(static_cast<int>(rng.uniform_index(kClasses)));
  }

  TrainConfig tc;
  tc.method = cfg.method;
  tc.placement = cfg.placement;
  tc.r = 1 + rng.uniform_index(3);
  tc.k = 2;
  tc.tau = 0.5 + rng.uniform();
  in.prompt = init_prompt(in.backbone, in.graphs.front(), tc, rng);
  in.head = init_head(dims.back(), kClasses, rng);
  // Move away from the zero/identity initialization so every path is live.
  // Graph data prompts stay small so edge weights keep their sign.
  const double spread = in.prompt.kind == PromptKind::Gdp ? 0.2 : 1.0;
  for (auto view : parameter_views(in.prompt, in.head)) {
    for (double& x : view) x += spread * rng.normal();
  }
  // Large embeddings make the loss strongly curved along head weights and
  // a saturated softmax leaves gradients near 1e-9; both defeat central
  // differences. Rescale the last backbone layer, then the head, so that
  // embeddings and logits are O(1).
  auto peak_of = [&](auto&& pick) {
    double peak = 0.0;
    for (const Graph& g : in.graphs) {
      const auto c = forward(in.backbone, g, in.prompt, in.head, cfg.task);
      for (double x : pick(c).values()) peak = std::max(peak, std::abs(x));
    }
    return peak;
  };
  const double emb_peak = peak_of([](const ForwardCache& c) -> const Mat& { return c.embeddings; });
  if (emb_peak > 3.0) {
    const double s = 3.0 / emb_peak;
    auto& last = in.backbone.layers.back();
    for (Mat* m : {&last.W, &last.W_self, &last.W2}) {
      if (cfg.layer_kind == LayerKind::Gin && m != &last.W2) continue;
      for (double& x : m->values()) x *= s;
    }
    for (double& x : cfg.layer_kind == LayerKind::Gin ? last.b2 : last.b) x *= s;
  }
  for (double& b : in.head.b) b = std::clamp(b, -1.0, 1.0);
  const double logit_peak = peak_of([](const ForwardCache& c) -> const Mat& { return c.logits; });
  if (logit_peak > 2.0) {
    for (double& w : in.head.W.values()) w *= 2.0 / logit_peak;
  }
  return in;
}

// ReLU activation pattern; a change between perturbed runs marks a kink.
std::vector<bool> relu_pattern(const ForwardCache& c) {
  std::vector<bool> out;
  for (std::size_t l = 0; l < c.layers.size(); ++l) {
    const auto& lc = c.layers[l];
    for (double x : lc.hidden_pre.values()) out.push_back(x > 0.0);
    if (l + 1 < c.layers.size()) {
      for (double x : lc.pre_activation.values()) out.push_back(x > 0.0);
    }
  }
  return out;
}

struct Evaluation {
  double loss = 0.0;
  std::vector<bool> pattern;
};

Evaluation evaluate_loss(const GradcheckConfig& cfg, const Instance& in) {
  Evaluation ev;
  if (cfg.task == Task::Node) {
    const Graph& g = in.graphs.front();
    const ForwardCache c = forward(in.backbone, g, in.prompt, in.head, Task::Node);
    std::vector<NodeId> mask(g.num_nodes);
    for (NodeId v = 0; v < g.num_nodes; ++v) mask[v] = v;
    ev.loss = cross_entropy(c.logits, *g.labels, mask);
    ev.pattern = relu_pattern(c);
    return ev;
  }
  const std::vector<NodeId> row0{0};
  for (std::size_t i = 0; i < in.graphs.size(); ++i) {
    const ForwardCache c = forward(in.backbone, in.graphs[i], in.prompt, in.head, Task::Graph);
    ev.loss += cross_entropy(c.logits, std::span<const int>(&in.graph_labels[i], 1), row0) /
               static_cast<double>(in.graphs.size());
    auto p = relu_pattern(c);
    ev.pattern.insert(ev.pattern.end(), p.begin(), p.end());
  }
  return ev;
}

Gradients analytic_gradients(const GradcheckConfig& cfg, const Instance& in) {
  if (cfg.task == Task::Node) {
    const Graph& g = in.graphs.front();
    const ForwardCache c = forward(in.backbone, g, in.prompt, in.head, Task::Node);
    std::vector<NodeId> mask(g.num_nodes);
    for (NodeId v = 0; v < g.num_nodes; ++v) mask[v] = v;
    return loss_and_backward(in.backbone, g, in.prompt, in.head, c, *g.labels, mask).grads;
  }
  const std::vector<NodeId> row0{0};
  const double scale = 1.0 / static_cast<double>(in.graphs.size());
  std::optional<Gradients> total;
  for (std::size_t i = 0; i < in.graphs.size(); ++i) {
    const ForwardCache c = forward(in.backbone, in.graphs[i], in.prompt, in.head, Task::Graph);
    auto lg = loss_and_backward(in.backbone, in.graphs[i], in.prompt, in.head, c,
                                std::span<const int>(&in.graph_labels[i], 1), row0, scale);
    if (!total) {
      total = std::move(lg.grads);
      continue;
    }
    auto dst = gradient_views(*total);
    auto src = gradient_views(lg.grads);
    for (std::size_t j = 0; j < dst.size(); ++j)
      for (std::size_t q = 0; q < dst[j].size(); ++q) dst[j][q] += src[j][q];
  }
  return *total;
}

}  // namespace

double relative_error(double a, double n, double floor) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

GradcheckReport gradcheck(const GradcheckConfig& cfg) {
  if (!(cfg.step > 0.0)) throw ParameterError("gradcheck step must be positive");
  if (!(cfg.abs_floor > 0.0)) throw ParameterError("gradcheck floor must be positive");
  if (cfg.method == Method::None) throw ParameterError("gradcheck needs a prompt method");
  if (cfg.task == Task::Graph && cfg.method == Method::LrGmp) {
    throw ParameterError("lr_gmp prompts are tied to one graph's edges; use conditional_lr_gmp for graph tasks");
  }
  Instance in = make_instance(cfg);
  Gradients grads = analytic_gradients(cfg, in);
  const auto base = evaluate_loss(cfg, in);

  GradcheckReport rep;
  rep.config = cfg;
  rep.num_nodes = in.graphs.front().num_nodes;
  auto params = parameter_views(in.prompt, in.head);
  auto analytic = gradient_views(grads);
  const auto names = parameter_names(in.prompt);
  if (analytic.size() != params.size()) throw ShapeError("gradient groups differ from parameter groups");
  const double sign = cfg.mutant == GradMutant::SignFlip ? -1.0 : 1.0;

  for (std::size_t i = 0; i < params.size(); ++i) {
    ParamCheck pc;
    pc.name = names[i];
    for (std::size_t j = 0; j < params[i].size(); ++j) {
      double& x = params[i][j];
      const double saved = x;
      x = saved + cfg.step;
      const auto plus = evaluate_loss(cfg, in);
      x = saved - cfg.step;
      const auto minus = evaluate_loss(cfg, in);
      x = saved;
      if (plus.pattern != base.pattern || minus.pattern != base.pattern) {
        ++pc.kinks;
        continue;
      }
      const double numeric = (plus.loss - minus.loss) / (2.0 * cfg.step);
      pc.max_rel_err = std::max(pc.max_rel_err, relative_error(sign * analytic[i][j], numeric, cfg.abs_floor));
      ++pc.checked;
    }
    rep.max_rel_err = std::max(rep.max_rel_err, pc.max_rel_err);
    rep.checked += pc.checked;
    rep.kinks += pc.kinks;
    rep.params.push_back(std::move(pc));
  }
  const double total = static_cast<double>(rep.checked + rep.kinks);
  rep.pass = rep.checked > 0 && rep.max_rel_err < cfg.tolerance &&
             static_cast<double>(rep.kinks) <= cfg.max_kink_fraction * total;
  return rep;
}

std::vector<GradcheckReport> gradcheck_suite(std::uint64_t seed, GradMutant mutant) {
  std::vector<GradcheckReport> out;
  const Rng root(seed);
  std::uint64_t stream = 0;
  for (Method m : {Method::LrGmp, Method::ConditionalLrGmp}) {
    for (LayerKind k : {LayerKind::Gcn, LayerKind::Gin, LayerKind::MpnnLinear}) {
      for (Placement p : {Placement::First, Placement::Middle, Placement::Last, Placement::All}) {
        GradcheckConfig cfg;
        cfg.method = m;
        cfg.layer_kind = k;
        cfg.placement = p;
        cfg.seed = root.split(stream++).next_u64();
        cfg.mutant = mutant;
        out.push_back(gradcheck(cfg));
      }
    }
  }
  return out;
}

nlohmann::json gradcheck_to_json(const GradcheckReport& r) {
  nlohmann::json params = nlohmann::json::array();
  for (const auto& p : r.params) {
    params.push_back({{"name", p.name}, {"checked", p.checked}, {"kinks", p.kinks}, {"max_rel_err", p.max_rel_err}});
  }
  return {{"method", to_string(r.config.method)},
          {"layer_kind", to_string(r.config.layer_kind)},
          {"placement", to_string(r.config.placement)},
          {"task", r.config.task == Task::Node ? "node" : "graph"},
          {"seed", r.config.seed},
          {"step", r.config.step},
          {"tolerance", r.config.tolerance},
          {"abs_floor", r.config.abs_floor},
          {"num_nodes", r.num_nodes},
          {"max_rel_err", r.max_rel_err},
          {"checked", r.checked},
          {"kinks", r.kinks},
          {"pass", r.pass},
          {"params", std::move(params)}};
}

}  // namespace gmp
