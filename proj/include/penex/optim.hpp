#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "penex/model.hpp"

namespace penex {

enum class OptimKind { kSgd, kAdam };
enum class ClipMode { kValue, kGlobalNorm };

std::string_view to_string(OptimKind kind);
OptimKind optim_kind_from_string(std::string_view name);

struct OptimSpec {
  OptimKind kind = OptimKind::kAdam;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::optional<double> grad_clip_value;
  ClipMode clip_mode = ClipMode::kValue;

  void validate() const;
};

using Gradients = std::vector<std::vector<double>>;

/// Clamps each component to [-limit, limit], or rescales the whole set so its
/// L2 norm is at most limit.
void clip_gradients(Gradients& grads, double limit, ClipMode mode);
double global_norm(const Gradients& grads);

class Optimizer {
 public:
  Optimizer(OptimSpec spec, const Parameters& params);

  /// Applies one update; `grads` is in Parameters::all() order.
  void step(Parameters& params, const Gradients& grads);
  const OptimSpec& spec() const { return spec_; }

 private:
  OptimSpec spec_;
  std::vector<std::vector<double>> m_, v_;
  long long t_ = 0;
};

}  // namespace penex
