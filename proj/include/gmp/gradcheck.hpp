#pragma once

// Central finite-difference check of loss_and_backward on random instances.

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "gmp/trainer.hpp"

namespace gmp {

enum class GradMutant {
  None,
  /// Negate every analytic gradient before comparing.
  SignFlip,
};

struct GradcheckConfig {
  Method method = Method::LrGmp;
  LayerKind layer_kind = LayerKind::Gcn;
  Placement placement = Placement::All;
  Task task = Task::Node;
  std::size_t num_layers = 3;
  std::uint64_t seed = 0;
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Denominator floor of the relative error. A central difference with
  /// step h carries roughly eps |loss| / h ~ 1e-11 of roundoff, so gradients
  /// much below 1e-6 cannot be resolved to 1e-4 relative accuracy.
  double abs_floor = 1e-6;
  /// Fail when more than this fraction of scalars sit on a ReLU kink.
  double max_kink_fraction = 0.05;
  GradMutant mutant = GradMutant::None;
};

struct ParamCheck {
  std::string name;
  std::size_t checked = 0;
  std::size_t kinks = 0;
  double max_rel_err = 0.0;
};

struct GradcheckReport {
  GradcheckConfig config;
  std::size_t num_nodes = 0;
  std::vector<ParamCheck> params;
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  std::size_t kinks = 0;
  bool pass = false;
};

/// |a - n| / max(|a|, |n|, floor)
double relative_error(double analytic, double numeric, double floor = 1e-6);

GradcheckReport gradcheck(const GradcheckConfig& cfg);

/// LR-GMP and conditional LR-GMP over every layer kind and placement
/// (24 configurations), each on its own random instance.
std::vector<GradcheckReport> gradcheck_suite(std::uint64_t seed, GradMutant mutant = GradMutant::None);

nlohmann::json gradcheck_to_json(const GradcheckReport& r);

}  // namespace gmp
