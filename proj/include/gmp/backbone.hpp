#pragma once

// Frozen message-passing backbone with message prompts injected at chosen
// layers, and exact reverse-mode gradients for the prompt and head
// parameters (backbone weights are never differentiated).
//
// Layer l maps H (N x d_l) to H' (N x d_{l+1}):
//   M  = per-edge messages of width d_l + d_E
//   M~ = M + U Vᵀ            (LR-GMP)      or  M + (M W) Vᵀ  (conditional)
//   G  = sum-aggregate(M~)
//   Z  = G W + b                          (GCN, Â-normalized messages)
//      = H W_self + G W + b               (MPNN, A[H_u || E_vu] messages)
//      = relu(h W + b) W2 + b2, h = [(1+eps) H || 0] + G   (GIN)
//   H' = relu(Z) on every layer but the last.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gmp/dense.hpp"
#include "gmp/graph.hpp"
#include "gmp/message.hpp"
#include "gmp/prompt_zoo.hpp"

namespace gmp {

enum class LayerKind { Gcn, Gin, MpnnLinear };

std::string to_string(LayerKind kind);
LayerKind parse_layer_kind(const std::string& name);

struct LayerWeights {
  /// (d_l + d_E) x d_{l+1}; applied to aggregated messages.
  Mat W;
  std::vector<double> b;
  /// MPNN only: d_l x d_{l+1}.
  Mat W_self;
  /// GIN only: second MLP layer, d_{l+1} x d_{l+1}.
  Mat W2;
  std::vector<double> b2;

  bool operator==(const LayerWeights&) const = default;
};

struct BackboneSpec {
  LayerKind kind = LayerKind::Gcn;
  /// Node widths: input, hidden..., output. num_layers() == dims.size() - 1.
  std::vector<std::size_t> dims;
  std::size_t edge_dim = 0;
  /// Add a unit self-loop to every node before message passing.
  bool self_loops = true;
  double gin_eps = 0.0;
  std::vector<LayerWeights> layers;

  std::size_t num_layers() const noexcept { return layers.size(); }
  std::size_t message_width(std::size_t layer) const noexcept { return dims[layer] + edge_dim; }

  bool operator==(const BackboneSpec&) const = default;
};

void validate_backbone(const BackboneSpec& spec);

/// Gaussian weights with std 1/sqrt(fan_in), zero biases.
BackboneSpec init_backbone(LayerKind kind, std::vector<std::size_t> dims, std::size_t edge_dim, bool self_loops, Rng& rng);

BackboneSpec parse_backbone_json(const std::string& text);
std::string dump_backbone_json(const BackboneSpec& spec);
BackboneSpec load_backbone(const std::filesystem::path& path);
void save_backbone(const BackboneSpec& spec, const std::filesystem::path& path);

enum class PromptKind { None, LrGmp, ConditionalLrGmp, Gdp };

/// U is used by LR-GMP, W by the conditional variant; V by both.
struct LayerPrompt {
  Mat U;
  Mat W;
  Mat V;

  bool operator==(const LayerPrompt&) const = default;
};

struct PromptState {
  PromptKind kind = PromptKind::None;
  /// One slot per backbone layer; empty slots are unprompted.
  std::vector<std::optional<LayerPrompt>> layers;
  /// Input-level graph data prompt (kind == Gdp).
  std::optional<GdpSpec> gdp;
};

struct Head {
  Mat W;
  std::vector<double> b;

  bool operator==(const Head&) const = default;
};

enum class Task { Node, Graph };

struct LayerCache {
  Mat input;
  MessageMatrix messages;
  /// M W for the conditional prompt.
  Mat cond_u;
  Mat aggregated;
  /// GIN inner pre-activation.
  Mat hidden_pre;
  Mat hidden;
  Mat pre_activation;
  Mat output;
};

/// Everything forward() derives from the graph alone. Reusable across
/// passes as long as no graph data prompt changes the input.
struct PreparedGraph {
  /// The graph after any input-level prompt.
  Graph input;
  /// Edges indexing message rows (self-looped when the backbone asks).
  NormalizedAdjacency adjacency;
  /// Per-edge message coefficient: Â for GCN, raw A otherwise.
  std::vector<double> coeff;
};

std::shared_ptr<const PreparedGraph> prepare_graph(const BackboneSpec& backbone, const Graph& input);

struct ForwardCache {
  Task task = Task::Node;
  std::shared_ptr<const PreparedGraph> prepared;
  std::vector<LayerCache> layers;
  Mat embeddings;
  /// 1 x d mean of embeddings (graph task).
  Mat readout;
  Mat logits;

  const Graph& input() const { return prepared->input; }
  const NormalizedAdjacency& adjacency() const { return prepared->adjacency; }
  const std::vector<double>& coeff() const { return prepared->coeff; }
};

ForwardCache forward(const BackboneSpec& backbone, const Graph& graph, const PromptState& prompt, const Head& head,
                     Task task = Task::Node);
/// Same pass on a prepared graph; the prompt must not carry a GDP.
ForwardCache forward(const BackboneSpec& backbone, std::shared_ptr<const PreparedGraph> prepared,
                     const PromptState& prompt, const Head& head, Task task = Task::Node);

struct Gradients {
  PromptKind prompt_kind = PromptKind::None;
  std::vector<std::optional<LayerPrompt>> layers;
  Head head;
  std::optional<GdpSpec> gdp;
  /// Gradients w.r.t. the backbone's input graph (after any GDP).
  GraphGradient input;
};

struct LossAndGrad {
  double loss = 0.0;
  Gradients grads;
};

/// Softmax cross-entropy over the logits rows in `mask`, each weighted by
/// `scale` (default 1/|mask|, i.e. the mean). `labels` is indexed by row.
LossAndGrad loss_and_backward(const BackboneSpec& backbone, const Graph& graph, const PromptState& prompt,
                              const Head& head, const ForwardCache& cache, std::span<const int> labels,
                              std::span<const NodeId> mask, std::optional<double> scale = std::nullopt);

/// Mean cross-entropy only, no backward pass.
double cross_entropy(const Mat& logits, std::span<const int> labels, std::span<const NodeId> mask);

/// Views over every trainable scalar, in a fixed order: head W, head b, then
/// per prompted layer (U or W) and V, then GDP parameters.
std::vector<std::span<double>> parameter_views(PromptState& prompt, Head& head);
std::vector<std::span<double>> gradient_views(Gradients& grads);

/// Names matching parameter_views entry for entry.
std::vector<std::string> parameter_names(const PromptState& prompt);

}  // namespace gmp
