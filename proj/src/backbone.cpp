#include "gmp/backbone.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "gmp/error.hpp"
#include "gmp/json_util.hpp"
#include "gmp/kernels.hpp"

namespace gmp {

using nlohmann::json;

namespace {

void require_shape(const Mat& m, std::size_t rows, std::size_t cols, const std::string& what) {
  if (m.rows() != rows || m.cols() != cols) {
    throw ShapeError(what + " is " + m.shape_string() + ", expected " + std::to_string(rows) + "x" + std::to_string(cols));
  }
}

void add_bias(Mat& m, std::span<const double> b) {
  for (std::size_t r = 0; r < m.rows(); ++r) kernels::row_accumulate(b.size(), b.data(), m.row(r).data());
}

std::vector<double> column_sums(const Mat& m) {
  std::vector<double> out(m.cols(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r) kernels::row_accumulate(m.cols(), m.row(r).data(), out.data());
  return out;
}

/// grad ⊙ [pre > 0]
Mat relu_backward(const Mat& grad, const Mat& pre) {
  Mat out = grad;
  auto g = out.values();
  auto p = pre.values();
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(p[i] > 0.0)) g[i] = 0.0;
  }
  return out;
}

bool uses_edge_block(LayerKind kind) { return kind != LayerKind::Gcn; }

MessageMatrix layer_messages(const ForwardCache& c, const Mat& H, std::size_t edge_dim, bool edge_block) {
  const Graph& g = c.adjacency().graph;
  MessageMatrix out{Mat(g.num_edges(), H.cols() + edge_dim), H.cols(), edge_dim};
  const auto src = g.sources();
  for (EdgeId e = 0; e < g.num_edges(); ++e) {
    double* row = out.mat.row(e).data();
    kernels::row_scale(H.cols(), c.coeff()[e], H.row(src[e]).data(), row);
    if (edge_block) kernels::row_scale(edge_dim, c.coeff()[e], g.edge_feat.row(e).data(), row + H.cols());
  }
  return out;
}

json mat_json(const Mat& m) { return m.to_rows(); }

}  // namespace

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Gcn: return "gcn";
    case LayerKind::Gin: return "gin";
    case LayerKind::MpnnLinear: return "mpnn";
  }
  return "?";
}

LayerKind parse_layer_kind(const std::string& name) {
  if (name == "gcn") return LayerKind::Gcn;
  if (name == "gin") return LayerKind::Gin;
  if (name == "mpnn") return LayerKind::MpnnLinear;
  throw ParameterError("unknown layer kind '" + name + "' (expected gcn, gin or mpnn)");
}

void validate_backbone(const BackboneSpec& s) {
  if (s.dims.size() < 2) throw ShapeError("backbone needs at least an input and an output width");
  if (s.layers.size() != s.dims.size() - 1) {
    throw ShapeError("backbone has " + std::to_string(s.layers.size()) + " layers for " + std::to_string(s.dims.size()) + " widths");
  }
  for (std::size_t l = 0; l < s.layers.size(); ++l) {
    const auto& w = s.layers[l];
    const std::string at = "layer " + std::to_string(l);
    const std::size_t out = s.dims[l + 1];
    require_shape(w.W, s.message_width(l), out, at + " W");
    if (w.b.size() != out) throw ShapeError(at + " b has wrong length");
    if (s.kind == LayerKind::MpnnLinear) require_shape(w.W_self, s.dims[l], out, at + " W_self");
    if (s.kind == LayerKind::Gin) {
      require_shape(w.W2, out, out, at + " W2");
      if (w.b2.size() != out) throw ShapeError(at + " b2 has wrong length");
    }
    require_finite(w.W, "backbone W");
    require_finite(w.W_self, "backbone W_self");
    require_finite(w.W2, "backbone W2");
  }
}

BackboneSpec init_backbone(LayerKind kind, std::vector<std::size_t> dims, std::size_t edge_dim, bool self_loops, Rng& rng) {
  if (dims.size() < 2) throw ShapeError("init_backbone: need at least two widths");
  for (std::size_t d : dims) {
    if (d == 0) throw ShapeError("init_backbone: widths must be positive");
  }
  BackboneSpec s;
  s.kind = kind;
  s.dims = std::move(dims);
  s.edge_dim = edge_dim;
  s.self_loops = self_loops;
  for (std::size_t l = 0; l + 1 < s.dims.size(); ++l) {
    LayerWeights w;
    const std::size_t out = s.dims[l + 1];
    const std::size_t width = s.message_width(l);
    w.W = randn(rng, width, out, 1.0 / std::sqrt(static_cast<double>(width)));
    w.b.assign(out, 0.0);
    if (kind == LayerKind::MpnnLinear) w.W_self = randn(rng, s.dims[l], out, 1.0 / std::sqrt(static_cast<double>(s.dims[l])));
    if (kind == LayerKind::Gin) {
      w.W2 = randn(rng, out, out, 1.0 / std::sqrt(static_cast<double>(out)));
      w.b2.assign(out, 0.0);
    }
    s.layers.push_back(std::move(w));
  }
  validate_backbone(s);
  return s;
}

BackboneSpec parse_backbone_json(const std::string& text) {
  using namespace json_util;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError("", std::string("malformed JSON: ") + e.what());
  }
  BackboneSpec s;
  const auto& kind = require_field(doc, "", "layer_kind");
  if (!kind.is_string()) throw ParseError("/layer_kind", "expected string");
  try {
    s.kind = parse_layer_kind(kind.get<std::string>());
  } catch (const ParameterError& e) {
    throw ParseError("/layer_kind", e.what());
  }
  const auto& dims = require_array(require_field(doc, "", "dims"), "/dims");
  for (std::size_t i = 0; i < dims.size(); ++i) s.dims.push_back(require_index(dims[i], "/dims/" + std::to_string(i)));
  s.edge_dim = doc.contains("edge_dim") ? require_index(doc["edge_dim"], "/edge_dim") : 0;
  const auto& loops = require_field(doc, "", "self_loops");
  if (!loops.is_boolean()) throw ParseError("/self_loops", "expected boolean");
  s.self_loops = loops.get<bool>();
  s.gin_eps = doc.contains("gin_eps") ? require_number(doc["gin_eps"], "/gin_eps") : 0.0;
  const auto& layers = require_array(require_field(doc, "", "layers"), "/layers");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string p = "/layers/" + std::to_string(l);
    LayerWeights w;
    w.W = read_matrix(require_field(layers[l], p, "W"), p + "/W");
    w.b = read_vector(require_field(layers[l], p, "b"), p + "/b");
    if (layers[l].contains("W_self")) w.W_self = read_matrix(layers[l]["W_self"], p + "/W_self");
    if (layers[l].contains("W2")) w.W2 = read_matrix(layers[l]["W2"], p + "/W2");
    if (layers[l].contains("b2")) w.b2 = read_vector(layers[l]["b2"], p + "/b2");
    s.layers.push_back(std::move(w));
  }
  try {
    validate_backbone(s);
  } catch (const std::exception& e) {
    throw ParseError("/layers", e.what());
  }
  return s;
}

std::string dump_backbone_json(const BackboneSpec& s) {
  json layers = json::array();
  for (const auto& w : s.layers) {
    json l = {{"W", mat_json(w.W)}, {"b", w.b}};
    if (s.kind == LayerKind::MpnnLinear) l["W_self"] = mat_json(w.W_self);
    if (s.kind == LayerKind::Gin) {
      l["W2"] = mat_json(w.W2);
      l["b2"] = w.b2;
    }
    layers.push_back(std::move(l));
  }
  json doc = {{"layer_kind", to_string(s.kind)}, {"dims", s.dims},           {"edge_dim", s.edge_dim},
              {"self_loops", s.self_loops},      {"gin_eps", s.gin_eps},     {"layers", std::move(layers)}};
  return doc.dump() + "\n";
}

BackboneSpec load_backbone(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("", "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_backbone_json(ss.str());
}

void save_backbone(const BackboneSpec& spec, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << dump_backbone_json(spec);
}

// ---------------------------------------------------------------- forward

std::shared_ptr<const PreparedGraph> prepare_graph(const BackboneSpec& bb, const Graph& input) {
  if (input.node_dim() != bb.dims.front()) {
    throw ShapeError("graph node features have width " + std::to_string(input.node_dim()) + ", backbone expects " +
                     std::to_string(bb.dims.front()));
  }
  if (input.edge_dim() != bb.edge_dim) {
    throw ShapeError("graph edge features have width " + std::to_string(input.edge_dim()) + ", backbone expects " +
                     std::to_string(bb.edge_dim));
  }
  auto p = std::make_shared<PreparedGraph>();
  p->input = input;
  if (bb.kind == LayerKind::Gcn) {
    p->adjacency = symmetric_normalize(input, bb.self_loops);
    p->coeff = p->adjacency.weight;
  } else {
    if (bb.self_loops) {
      auto looped = with_self_loops(input);
      p->adjacency.graph = std::move(looped.graph);
      p->adjacency.original_to_new = std::move(looped.original_to_new);
    } else {
      p->adjacency.graph = input;
      p->adjacency.original_to_new.resize(input.num_edges());
      std::iota(p->adjacency.original_to_new.begin(), p->adjacency.original_to_new.end(), EdgeId{0});
    }
    p->coeff = p->adjacency.graph.edge_weight;
  }
  return p;
}

ForwardCache forward(const BackboneSpec& bb, const Graph& graph, const PromptState& prompt, const Head& head, Task task) {
  if (!prompt.gdp) return forward(bb, prepare_graph(bb, graph), prompt, head, task);
  PromptState rest = prompt;
  rest.gdp.reset();
  ForwardCache c = forward(bb, prepare_graph(bb, apply_gdp(graph, *prompt.gdp)), rest, head, task);
  return c;
}

ForwardCache forward(const BackboneSpec& bb, std::shared_ptr<const PreparedGraph> prepared, const PromptState& prompt,
                     const Head& head, Task task) {
  if (prompt.gdp) throw ParameterError("forward on a prepared graph cannot apply a graph data prompt");
  const std::size_t L = bb.num_layers();
  if (!prompt.layers.empty() && prompt.layers.size() != L) {
    throw ShapeError("prompt has " + std::to_string(prompt.layers.size()) + " layer slots for a " + std::to_string(L) +
                     "-layer backbone");
  }
  require_shape(head.W, bb.dims.back(), head.W.cols(), "head W");
  if (head.b.size() != head.W.cols()) throw ShapeError("head b length differs from head W columns");
  ForwardCache c;
  c.task = task;
  c.prepared = std::move(prepared);
  const Graph& mg = c.adjacency().graph;

  Mat H = c.input().node_feat;
  c.layers.resize(L);
  for (std::size_t l = 0; l < L; ++l) {
    LayerCache& lc = c.layers[l];
    const LayerWeights& w = bb.layers[l];
    lc.input = H;
    lc.messages = layer_messages(c, H, bb.edge_dim, uses_edge_block(bb.kind));
    Mat prompted = lc.messages.mat;
    if (!prompt.layers.empty() && prompt.layers[l]) {
      const LayerPrompt& p = *prompt.layers[l];
      const std::size_t width = bb.message_width(l);
      if (p.V.rows() != width) throw ShapeError("layer " + std::to_string(l) + " prompt V rows differ from message width");
      if (prompt.kind == PromptKind::LrGmp) {
        require_shape(p.U, mg.num_edges(), p.V.cols(), "layer " + std::to_string(l) + " prompt U");
        axpy(prompted, 1.0, matmul_nt(p.U, p.V));
      } else if (prompt.kind == PromptKind::ConditionalLrGmp) {
        require_shape(p.W, width, p.V.cols(), "layer " + std::to_string(l) + " prompt W");
        lc.cond_u = matmul(lc.messages.mat, p.W);
        axpy(prompted, 1.0, matmul_nt(lc.cond_u, p.V));
      }
    }
    lc.aggregated = aggregate(mg, prompted);

    switch (bb.kind) {
      case LayerKind::Gcn:
        lc.pre_activation = matmul(lc.aggregated, w.W);
        break;
      case LayerKind::MpnnLinear:
        lc.pre_activation = matmul(H, w.W_self);
        axpy(lc.pre_activation, 1.0, matmul(lc.aggregated, w.W));
        break;
      case LayerKind::Gin: {
        Mat h = lc.aggregated;
        for (std::size_t v = 0; v < H.rows(); ++v) kernels::row_axpy(H.cols(), 1.0 + bb.gin_eps, H.row(v).data(), h.row(v).data());
        lc.hidden_pre = matmul(h, w.W);
        add_bias(lc.hidden_pre, w.b);
        lc.hidden = relu(lc.hidden_pre);
        lc.pre_activation = matmul(lc.hidden, w.W2);
        break;
      }
    }
    add_bias(lc.pre_activation, bb.kind == LayerKind::Gin ? std::span<const double>(w.b2) : std::span<const double>(w.b));
    lc.output = l + 1 < L ? relu(lc.pre_activation) : lc.pre_activation;
    H = lc.output;
  }
  c.embeddings = H;
  if (task == Task::Node) {
    c.logits = matmul(c.embeddings, head.W);
  } else {
    c.readout = Mat(1, H.cols());
    if (H.rows() > 0) {
      auto sums = column_sums(H);
      for (std::size_t j = 0; j < sums.size(); ++j) c.readout(0, j) = sums[j] / static_cast<double>(H.rows());
    }
    c.logits = matmul(c.readout, head.W);
  }
  add_bias(c.logits, head.b);
  return c;
}

// ---------------------------------------------------------------- backward

double cross_entropy(const Mat& logits, std::span<const int> labels, std::span<const NodeId> mask) {
  if (mask.empty()) throw ParameterError("cross_entropy: empty mask");
  double total = 0.0;
  for (NodeId v : mask) {
    const auto row = logits.row(v);
    double mx = row[0];
    for (double x : row) mx = std::max(mx, x);
    double z = 0.0;
    for (double x : row) z += std::exp(x - mx);
    total += std::log(z) + mx - row[static_cast<std::size_t>(labels[v])];
  }
  return total / static_cast<double>(mask.size());
}

LossAndGrad loss_and_backward(const BackboneSpec& bb, const Graph& graph, const PromptState& prompt, const Head& head,
                              const ForwardCache& c, std::span<const int> labels, std::span<const NodeId> mask,
                              std::optional<double> scale_opt) {
  if (mask.empty()) throw ParameterError("loss_and_backward: empty mask");
  const std::size_t C = c.logits.cols();
  const double scale = scale_opt.value_or(1.0 / static_cast<double>(mask.size()));
  LossAndGrad out;

  Mat d_logits(c.logits.rows(), C);
  for (NodeId v : mask) {
    if (v >= c.logits.rows() || v >= labels.size()) throw ShapeError("loss_and_backward: mask index out of range");
    const int y = labels[v];
    if (y < 0 || static_cast<std::size_t>(y) >= C) throw ParameterError("loss_and_backward: label out of range");
    const auto row = c.logits.row(v);
    double mx = row[0];
    for (double x : row) mx = std::max(mx, x);
    double z = 0.0;
    for (double x : row) z += std::exp(x - mx);
    out.loss += scale * (std::log(z) + mx - row[static_cast<std::size_t>(y)]);
    for (std::size_t j = 0; j < C; ++j) d_logits(v, j) = scale * std::exp(row[j] - mx) / z;
    d_logits(v, static_cast<std::size_t>(y)) -= scale;
  }

  Gradients& g = out.grads;
  g.prompt_kind = prompt.kind;
  g.head.b = column_sums(d_logits);
  Mat dH;
  if (c.task == Task::Node) {
    g.head.W = matmul_tn(c.embeddings, d_logits);
    dH = matmul_nt(d_logits, head.W);
  } else {
    g.head.W = matmul_tn(c.readout, d_logits);
    const Mat d_readout = matmul_nt(d_logits, head.W);
    dH = Mat(c.embeddings.rows(), c.embeddings.cols());
    const double inv_n = 1.0 / static_cast<double>(c.embeddings.rows());
    for (std::size_t v = 0; v < dH.rows(); ++v)
      for (std::size_t j = 0; j < dH.cols(); ++j) dH(v, j) = d_readout(0, j) * inv_n;
  }

  const Graph& mg = c.adjacency().graph;
  const auto src = mg.sources();
  const std::size_t L = bb.num_layers();
  const bool edge_block = uses_edge_block(bb.kind);
  std::vector<double> d_coeff(mg.num_edges(), 0.0);
  Mat d_edge_feat(mg.num_edges(), bb.edge_dim);
  g.layers.assign(L, std::nullopt);

  for (std::size_t li = L; li-- > 0;) {
    const LayerCache& lc = c.layers[li];
    const LayerWeights& w = bb.layers[li];
    const std::size_t d_in = lc.input.cols();
    const Mat dZ = li + 1 < L ? relu_backward(dH, lc.pre_activation) : dH;

    Mat dG;
    Mat dH_in(lc.input.rows(), d_in);
    switch (bb.kind) {
      case LayerKind::Gcn:
        dG = matmul_nt(dZ, w.W);
        break;
      case LayerKind::MpnnLinear:
        dG = matmul_nt(dZ, w.W);
        dH_in = matmul_nt(dZ, w.W_self);
        break;
      case LayerKind::Gin: {
        const Mat d_hidden = relu_backward(matmul_nt(dZ, w.W2), lc.hidden_pre);
        dG = matmul_nt(d_hidden, w.W);
        for (std::size_t v = 0; v < dH_in.rows(); ++v) kernels::row_axpy(d_in, 1.0 + bb.gin_eps, dG.row(v).data(), dH_in.row(v).data());
        break;
      }
    }

    const Mat d_prompted = scatter_to_edges(mg, dG);
    Mat dM = d_prompted;
    if (!prompt.layers.empty() && prompt.layers[li]) {
      const LayerPrompt& p = *prompt.layers[li];
      LayerPrompt lg;
      if (prompt.kind == PromptKind::LrGmp) {
        lg.U = matmul(d_prompted, p.V);
        lg.V = matmul_tn(d_prompted, p.U);
      } else if (prompt.kind == PromptKind::ConditionalLrGmp) {
        const Mat d_u = matmul(d_prompted, p.V);
        lg.V = matmul_tn(d_prompted, lc.cond_u);
        lg.W = matmul_tn(lc.messages.mat, d_u);
        axpy(dM, 1.0, matmul_nt(d_u, p.W));
      }
      g.layers[li] = std::move(lg);
    }

    for (EdgeId e = 0; e < mg.num_edges(); ++e) {
      const double* row = dM.row(e).data();
      const double* h_src = lc.input.row(src[e]).data();
      kernels::row_axpy(d_in, c.coeff()[e], row, dH_in.row(src[e]).data());
      double dc = kernels::row_dot(d_in, row, h_src);
      if (edge_block && bb.edge_dim > 0) {
        kernels::row_axpy(bb.edge_dim, c.coeff()[e], row + d_in, d_edge_feat.row(e).data());
        dc += kernels::row_dot(bb.edge_dim, row + d_in, mg.edge_feat.row(e).data());
      }
      d_coeff[e] += dc;
    }
    dH = std::move(dH_in);
  }

  // Map message-graph gradients back onto the backbone's input graph.
  const Graph& in = c.input();
  const auto& o2n = c.adjacency().original_to_new;
  g.input.node_feat = std::move(dH);
  g.input.edge_feat = Mat(in.num_edges(), bb.edge_dim);
  for (EdgeId e = 0; e < in.num_edges(); ++e) {
    auto from = d_edge_feat.row(o2n[e]);
    std::copy(from.begin(), from.end(), g.input.edge_feat.row(e).begin());
  }
  if (bb.kind == LayerKind::Gcn) {
    g.input.edge_weight = symmetric_normalize_backward(c.adjacency(), d_coeff);
  } else {
    g.input.edge_weight.resize(in.num_edges());
    for (EdgeId e = 0; e < in.num_edges(); ++e) g.input.edge_weight[e] = d_coeff[o2n[e]];
  }
  if (prompt.gdp) g.gdp = gdp_backward(graph, *prompt.gdp, g.input);
  return out;
}

// ---------------------------------------------------------------- parameter views

namespace {

template <class PromptT, class HeadT, class GdpT>
std::vector<std::span<double>> views(PromptKind kind, PromptT& layers, HeadT& head, GdpT& gdp) {
  std::vector<std::span<double>> out{head.W.values(), head.b};
  for (auto& slot : layers) {
    if (!slot) continue;
    if (kind == PromptKind::LrGmp) out.push_back(slot->U.values());
    if (kind == PromptKind::ConditionalLrGmp) out.push_back(slot->W.values());
    out.push_back(slot->V.values());
  }
  if (gdp) {
    for (auto s : gdp_parameters(*gdp)) out.push_back(s);
  }
  return out;
}

}  // namespace

std::vector<std::span<double>> parameter_views(PromptState& prompt, Head& head) {
  return views(prompt.kind, prompt.layers, head, prompt.gdp);
}

std::vector<std::span<double>> gradient_views(Gradients& grads) {
  return views(grads.prompt_kind, grads.layers, grads.head, grads.gdp);
}

std::vector<std::string> parameter_names(const PromptState& prompt) {
  std::vector<std::string> out{"head.W", "head.b"};
  for (std::size_t l = 0; l < prompt.layers.size(); ++l) {
    if (!prompt.layers[l]) continue;
    const std::string at = "layer" + std::to_string(l);
    if (prompt.kind == PromptKind::LrGmp) out.push_back(at + ".U");
    if (prompt.kind == PromptKind::ConditionalLrGmp) out.push_back(at + ".W");
    out.push_back(at + ".V");
  }
  if (prompt.gdp) {
    GdpSpec copy = *prompt.gdp;
    const auto n = gdp_parameters(copy).size();
    for (std::size_t i = 0; i < n; ++i) out.push_back("gdp." + gdp_kind(copy) + "[" + std::to_string(i) + "]");
  }
  return out;
}

}  // namespace gmp
