#pragma once

// Prompt tuning on top of a frozen backbone: few-shot splits, parameter
// initialization, full-batch optimization with best-validation checkpointing.

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "gmp/backbone.hpp"

namespace gmp {

struct Sgd {
  double momentum = 0.0;
};
struct Adam {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};
using Optimizer = std::variant<Adam, Sgd>;

/// What gets trained besides the head. The GDP methods are the baselines.
enum class Method {
  None,
  LrGmp,
  ConditionalLrGmp,
  NodeSingle,
  NodeMulti,
  EdgeSingle,
  EdgeMulti,
  EdgeWeightAdd,
  EdgeWeightMul,
  Subgraph,
  Hybrid,
};

/// "none", "lr_gmp", "conditional_lr_gmp", or a GDP kind name.
std::string to_string(Method m);
Method parse_method(const std::string& name);
bool is_gdp(Method m) noexcept;

enum class Placement { First, Middle, Last, All };

std::string to_string(Placement p);
Placement parse_placement(const std::string& name);
/// first = {0}, middle = {L/2}, last = {L-1}, all = {0..L-1}.
std::vector<std::size_t> placement_layers(Placement p, std::size_t num_layers);

struct TrainConfig {
  double lr = 1e-3;
  std::size_t epochs = 300;
  Optimizer optimizer = Adam{};
  std::uint64_t seed = 0;
  std::size_t r = 2;
  double tau = 1.0;
  /// Basis size for multi-prompts, prompt-node count for subgraph prompts.
  std::size_t k = 4;
  std::size_t shots = 1;
  Method method = Method::LrGmp;
  Placement placement = Placement::All;
  Task task = Task::Node;
};

/// Throws ParameterError on epochs == 0, r == 0, shots == 0, k == 0,
/// negative or non-finite lr, or tau <= 0. lr == 0 is accepted.
void validate(const TrainConfig& cfg);

/// `shots` training nodes per class; the rest of each class goes half to
/// validation (rounded up) and half to test. Lists come back sorted.
SplitSpec sample_few_shot(std::span<const int> labels, std::size_t shots, Rng& rng);

/// Argmax accuracy over `split`; ties go to the lowest class index.
double accuracy(const Mat& logits, std::span<const int> labels, std::span<const NodeId> split);

struct EpochRecord {
  /// Metrics at the parameters reached after `epoch` optimizer steps.
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_acc = 0.0;
  double test_acc = 0.0;
};

struct TrainedState {
  PromptState prompt;
  Head head;
  SplitSpec split;
  /// epochs + 1 records: before every step and after the last one.
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_val_acc = 0.0;
  double test_acc = 0.0;
};

/// Initial prompt for `method` on `graph` (U = 0, everything else small
/// Gaussian or the identity edit).
PromptState init_prompt(const BackboneSpec& backbone, const Graph& graph, const TrainConfig& cfg, Rng& rng);
Head init_head(std::size_t dim, std::size_t classes, Rng& rng);

/// Node classification on a labelled graph with a given split.
TrainedState train(const Graph& graph, const BackboneSpec& backbone, const TrainConfig& cfg, const SplitSpec& split);
/// As above with a few-shot split drawn from cfg.seed.
TrainedState train(const Graph& graph, const BackboneSpec& backbone, const TrainConfig& cfg);

/// Accuracy of a trained state on `split` of `graph`.
double evaluate(const TrainedState& state, const Graph& graph, const BackboneSpec& backbone, std::span<const NodeId> split);

struct GraphDataset {
  std::vector<Graph> graphs;
  std::vector<int> labels;
};

/// Graph classification with mean readout. Prompts must be shared across
/// graphs, so only none, conditional_lr_gmp and the node/edge feature
/// prompts are accepted. The split indexes graphs.
TrainedState train_graph_task(const GraphDataset& data, const BackboneSpec& backbone, const TrainConfig& cfg,
                              const SplitSpec& split);

nlohmann::json history_to_json(const TrainedState& state);

}  // namespace gmp
