#include "gmp/trainer.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "gmp/error.hpp"

namespace gmp {

namespace {

constexpr double kInitStd = 0.01;

// Sub-streams of the config seed.
enum Stream : std::uint64_t { kSplit = 1, kHead = 2, kPrompt = 3 };

struct MethodName {
  Method method;
  const char* name;
};
constexpr MethodName kMethods[] = {
    {Method::None, "none"},
    {Method::LrGmp, "lr_gmp"},
    {Method::ConditionalLrGmp, "conditional_lr_gmp"},
    {Method::NodeSingle, "node_single"},
    {Method::NodeMulti, "node_multi"},
    {Method::EdgeSingle, "edge_single"},
    {Method::EdgeMulti, "edge_multi"},
    {Method::EdgeWeightAdd, "edge_weight_add"},
    {Method::EdgeWeightMul, "edge_weight_mul"},
    {Method::Subgraph, "subgraph"},
    {Method::Hybrid, "hybrid"},
};

std::size_t num_classes(std::span<const int> labels) {
  int mx = -1;
  for (int y : labels) mx = std::max(mx, y);
  if (mx < 1) throw ParameterError("need labels from at least two classes");
  return static_cast<std::size_t>(mx) + 1;
}

std::size_t message_edge_count(const BackboneSpec& bb, const Graph& g) {
  return bb.self_loops ? with_self_loops(g).graph.num_edges() : g.num_edges();
}

GdpSpec init_gdp(Method m, const Graph& g, const TrainConfig& cfg, Rng& rng) {
  const std::size_t dv = g.node_dim();
  const std::size_t de = g.edge_dim();
  const std::size_t E = g.num_edges();
  auto need_edge_feat = [&] {
    if (de == 0) throw UnsupportedError(to_string(m) + " needs edge features, graph has none");
  };
  switch (m) {
    case Method::NodeSingle: return NodeSingle{std::vector<double>(dv, 0.0)};
    case Method::NodeMulti: return NodeMulti{randn(rng, cfg.k, dv, kInitStd), cfg.tau};
    case Method::EdgeSingle: need_edge_feat(); return EdgeSingle{std::vector<double>(de, 0.0)};
    case Method::EdgeMulti: need_edge_feat(); return EdgeMulti{randn(rng, cfg.k, de, kInitStd), cfg.tau};
    case Method::EdgeWeightAdd: return EdgeWeightAdd{std::vector<double>(E, 0.0)};
    case Method::EdgeWeightMul: return EdgeWeightMul{std::vector<double>(E, 1.0)};
    case Method::Subgraph: {
      SubgraphPrompt p;
      p.Hp = randn(rng, cfg.k, dv, kInitStd);
      for (NodeId v = 0; v < g.num_nodes; ++v)
        for (std::size_t k = 0; k < cfg.k; ++k) p.links.emplace_back(v, k);
      p.link_weight.assign(p.links.size(), 1.0 / static_cast<double>(cfg.k));
      p.link_feat = Mat(p.links.size(), de);
      return p;
    }
    case Method::Hybrid: return Hybrid{randn(rng, cfg.k, dv, kInitStd), cfg.tau, std::vector<double>(E, 1.0)};
    default: break;
  }
  throw ParameterError("not a graph data prompt: " + to_string(m));
}

class OptimizerState {
 public:
  OptimizerState(const Optimizer& opt, std::vector<std::span<double>> params, double lr)
      : opt_(opt), lr_(lr), params_(std::move(params)) {
    for (auto p : params_) {
      m_.emplace_back(p.size(), 0.0);
      v_.emplace_back(p.size(), 0.0);
    }
  }

  void step(const std::vector<std::span<double>>& grads) {
    if (grads.size() != params_.size()) throw ShapeError("optimizer: gradient groups differ from parameter groups");
    ++t_;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto p = params_[i];
      auto g = grads[i];
      if (g.size() != p.size()) throw ShapeError("optimizer: gradient size differs from parameter size");
      if (const auto* adam = std::get_if<Adam>(&opt_)) {
        const double c1 = 1.0 - std::pow(adam->beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(adam->beta2, static_cast<double>(t_));
        for (std::size_t j = 0; j < p.size(); ++j) {
          m_[i][j] = adam->beta1 * m_[i][j] + (1.0 - adam->beta1) * g[j];
          v_[i][j] = adam->beta2 * v_[i][j] + (1.0 - adam->beta2) * g[j] * g[j];
          p[j] -= lr_ * (m_[i][j] / c1) / (std::sqrt(v_[i][j] / c2) + adam->eps);
        }
      } else {
        const double mu = std::get<Sgd>(opt_).momentum;
        for (std::size_t j = 0; j < p.size(); ++j) {
          m_[i][j] = mu * m_[i][j] + g[j];
          p[j] -= lr_ * m_[i][j];
        }
      }
    }
  }

 private:
  Optimizer opt_;
  double lr_;
  std::vector<std::span<double>> params_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::uint64_t t_ = 0;
};

void check_split(const SplitSpec& s, std::size_t n) {
  if (s.train.empty()) throw ParameterError("training split is empty");
  for (const auto* part : {&s.train, &s.val, &s.test}) {
    for (NodeId v : *part) {
      if (v >= n) throw ParameterError("split index " + std::to_string(v) + " out of range");
    }
  }
}

double maybe_accuracy(const Mat& logits, std::span<const int> labels, std::span<const NodeId> split) {
  return split.empty() ? 0.0 : accuracy(logits, labels, split);
}

}  // namespace

std::string to_string(Method m) {
  for (const auto& e : kMethods) {
    if (e.method == m) return e.name;
  }
  return "?";
}

Method parse_method(const std::string& name) {
  for (const auto& e : kMethods) {
    if (name == e.name) return e.method;
  }
  throw ParameterError("unknown method '" + name + "'");
}

bool is_gdp(Method m) noexcept { return m != Method::None && m != Method::LrGmp && m != Method::ConditionalLrGmp; }

std::string to_string(Placement p) {
  switch (p) {
    case Placement::First: return "first";
    case Placement::Middle: return "middle";
    case Placement::Last: return "last";
    case Placement::All: return "all";
  }
  return "?";
}

Placement parse_placement(const std::string& name) {
  if (name == "first") return Placement::First;
  if (name == "middle") return Placement::Middle;
  if (name == "last") return Placement::Last;
  if (name == "all") return Placement::All;
  throw ParameterError("unknown placement '" + name + "' (expected first, middle, last or all)");
}

std::vector<std::size_t> placement_layers(Placement p, std::size_t L) {
  if (L == 0) throw ParameterError("placement on a backbone without layers");
  switch (p) {
    case Placement::First: return {0};
    case Placement::Middle: return {L / 2};
    case Placement::Last: return {L - 1};
    case Placement::All: break;
  }
  std::vector<std::size_t> all(L);
  for (std::size_t l = 0; l < L; ++l) all[l] = l;
  return all;
}

void validate(const TrainConfig& cfg) {
  if (!(cfg.lr >= 0.0) || !std::isfinite(cfg.lr)) throw ParameterError("lr must be finite and non-negative");
  if (cfg.epochs == 0) throw ParameterError("epochs must be at least 1");
  if (cfg.r == 0) throw ParameterError("r must be at least 1");
  if (cfg.shots == 0) throw ParameterError("shots must be at least 1");
  if (cfg.k == 0) throw ParameterError("k must be at least 1");
  if (!(cfg.tau > 0.0)) throw ParameterError("tau must be positive");
  if (const auto* a = std::get_if<Adam>(&cfg.optimizer)) {
    if (!(a->beta1 >= 0.0 && a->beta1 < 1.0 && a->beta2 >= 0.0 && a->beta2 < 1.0 && a->eps > 0.0)) {
      throw ParameterError("adam needs beta1, beta2 in [0, 1) and eps > 0");
    }
  } else if (!(std::get<Sgd>(cfg.optimizer).momentum >= 0.0)) {
    throw ParameterError("sgd momentum must be non-negative");
  }
}

SplitSpec sample_few_shot(std::span<const int> labels, std::size_t shots, Rng& rng) {
  if (shots == 0) throw ParameterError("shots must be at least 1");
  std::vector<std::vector<NodeId>> by_class;
  for (NodeId v = 0; v < labels.size(); ++v) {
    if (labels[v] < 0) continue;
    const auto c = static_cast<std::size_t>(labels[v]);
    if (c >= by_class.size()) by_class.resize(c + 1);
    by_class[c].push_back(v);
  }
  SplitSpec s;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& nodes = by_class[c];
    if (nodes.size() < shots + 2) {
      throw ParameterError("class " + std::to_string(c) + " has " + std::to_string(nodes.size()) + " nodes, needs " +
                           std::to_string(shots + 2));
    }
    for (std::size_t i = nodes.size(); i > 1; --i) std::swap(nodes[i - 1], nodes[rng.uniform_index(i)]);
    const std::size_t rest = nodes.size() - shots;
    const std::size_t n_val = (rest + 1) / 2;
    s.train.insert(s.train.end(), nodes.begin(), nodes.begin() + static_cast<std::ptrdiff_t>(shots));
    s.val.insert(s.val.end(), nodes.begin() + static_cast<std::ptrdiff_t>(shots),
                 nodes.begin() + static_cast<std::ptrdiff_t>(shots + n_val));
    s.test.insert(s.test.end(), nodes.begin() + static_cast<std::ptrdiff_t>(shots + n_val), nodes.end());
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

double accuracy(const Mat& logits, std::span<const int> labels, std::span<const NodeId> split) {
  if (split.empty()) throw ParameterError("accuracy over an empty split");
  std::size_t correct = 0;
  for (NodeId v : split) {
    const auto row = logits.row(v);
    const auto best = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    if (best == labels[v]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(split.size());
}

Head init_head(std::size_t dim, std::size_t classes, Rng& rng) {
  return Head{randn(rng, dim, classes, kInitStd), std::vector<double>(classes, 0.0)};
}

PromptState init_prompt(const BackboneSpec& bb, const Graph& graph, const TrainConfig& cfg, Rng& rng) {
  PromptState p;
  switch (cfg.method) {
    case Method::None: return p;
    case Method::LrGmp: p.kind = PromptKind::LrGmp; break;
    case Method::ConditionalLrGmp: p.kind = PromptKind::ConditionalLrGmp; break;
    default:
      p.kind = PromptKind::Gdp;
      p.gdp = init_gdp(cfg.method, graph, cfg, rng);
      return p;
  }
  p.layers.resize(bb.num_layers());
  const std::size_t E = message_edge_count(bb, graph);
  for (std::size_t l : placement_layers(cfg.placement, bb.num_layers())) {
    LayerPrompt lp;
    const std::size_t width = bb.message_width(l);
    if (p.kind == PromptKind::LrGmp) {
      lp.U = Mat(E, cfg.r);
    } else {
      lp.W = randn(rng, width, cfg.r, kInitStd);
    }
    lp.V = randn(rng, width, cfg.r, kInitStd);
    p.layers[l] = std::move(lp);
  }
  return p;
}

TrainedState train(const Graph& graph, const BackboneSpec& bb, const TrainConfig& cfg, const SplitSpec& split) {
  validate(cfg);
  validate_backbone(bb);
  if (cfg.task != Task::Node) throw ParameterError("train() handles node tasks; use train_graph_task");
  if (!graph.labels) throw ParameterError("graph has no labels");
  const std::vector<int>& labels = *graph.labels;
  check_split(split, graph.num_nodes);

  const Rng root(cfg.seed);
  Rng head_rng = root.split(kHead);
  Rng prompt_rng = root.split(kPrompt);
  TrainedState st;
  st.split = split;
  st.head = init_head(bb.dims.back(), num_classes(labels), head_rng);
  st.prompt = init_prompt(bb, graph, cfg, prompt_rng);

  OptimizerState opt(cfg.optimizer, parameter_views(st.prompt, st.head), cfg.lr);
  // Labels for the rows of the (possibly enlarged) prompted graph.
  std::vector<int> row_labels = labels;

  // Without a graph data prompt the graph never changes between steps.
  const auto prepared = st.prompt.gdp ? nullptr : prepare_graph(bb, graph);
  PromptState best_prompt = st.prompt;
  Head best_head = st.head;
  bool have_best = false;
  for (std::size_t epoch = 0; epoch <= cfg.epochs; ++epoch) {
    const ForwardCache cache =
        prepared ? forward(bb, prepared, st.prompt, st.head, Task::Node) : forward(bb, graph, st.prompt, st.head, Task::Node);
    row_labels.resize(cache.logits.rows(), -1);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = cross_entropy(cache.logits, row_labels, split.train);
    rec.train_acc = accuracy(cache.logits, row_labels, split.train);
    rec.val_acc = maybe_accuracy(cache.logits, row_labels, split.val);
    rec.test_acc = maybe_accuracy(cache.logits, row_labels, split.test);
    st.history.push_back(rec);
    if (!have_best || rec.val_acc > st.best_val_acc) {
      have_best = true;
      st.best_val_acc = rec.val_acc;
      st.best_epoch = epoch;
      st.test_acc = rec.test_acc;
      best_prompt = st.prompt;
      best_head = st.head;
    }
    if (epoch == cfg.epochs) break;
    LossAndGrad lg = loss_and_backward(bb, graph, st.prompt, st.head, cache, row_labels, split.train);
    opt.step(gradient_views(lg.grads));
  }
  st.prompt = std::move(best_prompt);
  st.head = std::move(best_head);
  return st;
}

TrainedState train(const Graph& graph, const BackboneSpec& bb, const TrainConfig& cfg) {
  if (!graph.labels) throw ParameterError("graph has no labels");
  Rng split_rng = Rng(cfg.seed).split(kSplit);
  return train(graph, bb, cfg, sample_few_shot(*graph.labels, cfg.shots, split_rng));
}

double evaluate(const TrainedState& st, const Graph& graph, const BackboneSpec& bb, std::span<const NodeId> split) {
  if (!graph.labels) throw ParameterError("graph has no labels");
  const ForwardCache cache = forward(bb, graph, st.prompt, st.head, Task::Node);
  return accuracy(cache.logits, *graph.labels, split);
}

TrainedState train_graph_task(const GraphDataset& data, const BackboneSpec& bb, const TrainConfig& cfg,
                              const SplitSpec& split) {
  validate(cfg);
  validate_backbone(bb);
  switch (cfg.method) {
    case Method::None:
    case Method::ConditionalLrGmp:
    case Method::NodeSingle:
    case Method::NodeMulti:
    case Method::EdgeSingle:
    case Method::EdgeMulti: break;
    default:
      throw ParameterError(to_string(cfg.method) + " has per-edge or per-node parameters and cannot be shared across graphs");
  }
  if (data.graphs.empty() || data.graphs.size() != data.labels.size()) {
    throw ParameterError("graph dataset needs one label per graph");
  }
  check_split(split, data.graphs.size());

  const Rng root(cfg.seed);
  Rng head_rng = root.split(kHead);
  Rng prompt_rng = root.split(kPrompt);
  TrainedState st;
  st.split = split;
  st.head = init_head(bb.dims.back(), num_classes(data.labels), head_rng);
  st.prompt = init_prompt(bb, data.graphs.front(), cfg, prompt_rng);
  OptimizerState opt(cfg.optimizer, parameter_views(st.prompt, st.head), cfg.lr);

  const std::vector<NodeId> row0{0};
  auto split_accuracy = [&](const std::vector<Mat>& logits, const std::vector<NodeId>& idx) {
    if (idx.empty()) return 0.0;
    std::size_t correct = 0;
    for (NodeId i : idx) correct += accuracy(logits[i], std::span<const int>(&data.labels[i], 1), row0) == 1.0;
    return static_cast<double>(correct) / static_cast<double>(idx.size());
  };

  std::vector<std::shared_ptr<const PreparedGraph>> prepared(data.graphs.size());
  if (!st.prompt.gdp) {
    for (std::size_t i = 0; i < data.graphs.size(); ++i) prepared[i] = prepare_graph(bb, data.graphs[i]);
  }
  PromptState best_prompt = st.prompt;
  Head best_head = st.head;
  bool have_best = false;
  const double scale = 1.0 / static_cast<double>(split.train.size());
  for (std::size_t epoch = 0; epoch <= cfg.epochs; ++epoch) {
    std::vector<ForwardCache> caches;
    std::vector<Mat> logits;
    caches.reserve(data.graphs.size());
    for (std::size_t i = 0; i < data.graphs.size(); ++i) {
      caches.push_back(prepared[i] ? forward(bb, prepared[i], st.prompt, st.head, Task::Graph)
                                   : forward(bb, data.graphs[i], st.prompt, st.head, Task::Graph));
      logits.push_back(caches.back().logits);
    }
    EpochRecord rec;
    rec.epoch = epoch;
    for (NodeId i : split.train) rec.train_loss += scale * cross_entropy(logits[i], std::span<const int>(&data.labels[i], 1), row0);
    rec.train_acc = split_accuracy(logits, split.train);
    rec.val_acc = split_accuracy(logits, split.val);
    rec.test_acc = split_accuracy(logits, split.test);
    st.history.push_back(rec);
    if (!have_best || rec.val_acc > st.best_val_acc) {
      have_best = true;
      st.best_val_acc = rec.val_acc;
      st.best_epoch = epoch;
      st.test_acc = rec.test_acc;
      best_prompt = st.prompt;
      best_head = st.head;
    }
    if (epoch == cfg.epochs) break;

    std::optional<Gradients> total;
    for (NodeId i : split.train) {
      LossAndGrad lg = loss_and_backward(bb, data.graphs[i], st.prompt, st.head, caches[i],
                                         std::span<const int>(&data.labels[i], 1), row0, scale);
      if (!total) {
        total = std::move(lg.grads);
        continue;
      }
      auto dst = gradient_views(*total);
      auto src = gradient_views(lg.grads);
      for (std::size_t j = 0; j < dst.size(); ++j)
        for (std::size_t q = 0; q < dst[j].size(); ++q) dst[j][q] += src[j][q];
    }
    opt.step(gradient_views(*total));
  }
  st.prompt = std::move(best_prompt);
  st.head = std::move(best_head);
  return st;
}

nlohmann::json history_to_json(const TrainedState& st) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& r : st.history) {
    epochs.push_back({{"epoch", r.epoch},
                      {"train_loss", r.train_loss},
                      {"train_acc", r.train_acc},
                      {"val_acc", r.val_acc},
                      {"test_acc", r.test_acc}});
  }
  return {{"epochs", std::move(epochs)},
          {"best_epoch", st.best_epoch},
          {"best_val_acc", st.best_val_acc},
          {"test_acc", st.test_acc}};
}

}  // namespace gmp
