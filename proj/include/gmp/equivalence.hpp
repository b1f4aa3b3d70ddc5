#pragma once

// Randomized certification that every graph data prompt equals its
// translated message prompt.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "gmp/gmp.hpp"

namespace gmp {

enum class Proposition { NodeFeature = 1, EdgeFeature = 2, EdgeWeight = 3, Subgraph = 4, Hybrid = 5 };

/// Deliberate translator corruptions used as negative controls.
enum class TranslatorMutant {
  None,
  /// Translate as if every A_vu (and every prompt link weight) were 1.
  DropMask,
};

struct SkippedNode {
  std::size_t trial;
  NodeId node;
};

struct EquivReport {
  int proposition = 0;
  std::size_t trials = 0;
  std::size_t comparisons = 0;
  double max_abs_diff = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  /// Max difference per prompt variant, e.g. "add" and "mul" for edge weights.
  std::map<std::string, double> variants;
  std::vector<SkippedNode> skipped_nodes;
  std::uint64_t seed = 0;
};

struct VerifyConfig {
  std::size_t trials = 200;
  std::size_t min_nodes = 2;
  std::size_t max_nodes = 30;
  double tolerance = 1e-9;
  std::uint64_t seed = 0;
  TranslatorMutant mutant = TranslatorMutant::None;
};

/// Result of comparing one prompted instance.
struct InstanceCheck {
  double max_abs_diff = 0.0;
  std::size_t comparisons = 0;
  std::vector<NodeId> skipped_nodes;
};

/// Message-level comparison for node, edge and hybrid prompts; sum-aggregated
/// node-level comparison (over nodes with an original neighbor) for subgraphs.
InstanceCheck check_instance(const Graph& g, const GdpSpec& spec, TranslatorMutant mutant = TranslatorMutant::None);

/// Random ConcatMpnn-ready graph: weights in [0.2, 2), Gaussian features.
Graph random_graph(Rng& rng, std::size_t min_nodes, std::size_t max_nodes, std::size_t max_node_dim,
                   std::size_t max_edge_dim);

EquivReport verify_proposition(Proposition prop, const VerifyConfig& cfg);
std::vector<EquivReport> verify_all(const VerifyConfig& cfg);

nlohmann::json report_to_json(const EquivReport& r);

}  // namespace gmp
