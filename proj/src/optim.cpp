#include "penex/optim.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "penex/errors.hpp"

namespace penex {

std::string_view to_string(OptimKind kind) { return kind == OptimKind::kSgd ? "sgd" : "adam"; }

OptimKind optim_kind_from_string(std::string_view name) {
  if (name == "sgd") return OptimKind::kSgd;
  if (name == "adam") return OptimKind::kAdam;
  throw ParameterError("unknown optimizer '" + std::string(name) + "'");
}

void OptimSpec::validate() const {
  if (!(learning_rate > 0.0)) throw ParameterError("learning rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
    throw ParameterError("Adam betas must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw ParameterError("adam_eps must be positive");
  if (grad_clip_value && !(*grad_clip_value > 0.0))
    throw ParameterError("gradient clip value must be positive");
}

double global_norm(const Gradients& grads) {
  double s = 0.0;
  for (const auto& g : grads)
    for (double v : g) s += v * v;
  return std::sqrt(s);
}

void clip_gradients(Gradients& grads, double limit, ClipMode mode) {
  if (mode == ClipMode::kValue) {
    for (auto& g : grads)
      for (auto& v : g) v = std::clamp(v, -limit, limit);
    return;
  }
  const double norm = global_norm(grads);
  if (norm <= limit || norm == 0.0) return;
  const double f = limit / norm;
  for (auto& g : grads)
    for (auto& v : g) v *= f;
}

Optimizer::Optimizer(OptimSpec spec, const Parameters& params) : spec_(spec) {
  spec_.validate();
  for (const auto& t : params.all()) {
    m_.emplace_back(t.numel(), 0.0);
    v_.emplace_back(t.numel(), 0.0);
  }
}

void Optimizer::step(Parameters& params, const Gradients& grads) {
  auto tensors = params.all();
  if (grads.size() != tensors.size()) throw DimensionError("optimizer: gradient count mismatch");
  ++t_;
  const double lr = spec_.learning_rate;
  const double bc1 = 1.0 - std::pow(spec_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(spec_.beta2, static_cast<double>(t_));
  for (std::size_t p = 0; p < tensors.size(); ++p) {
    auto w = tensors[p].mutable_data();
    const auto& g = grads[p];
    if (g.size() != w.size()) throw DimensionError("optimizer: gradient shape mismatch");
    if (spec_.kind == OptimKind::kSgd) {
      for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * g[i];
      continue;
    }
    auto& m = m_[p];
    auto& v = v_[p];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = spec_.beta1 * m[i] + (1.0 - spec_.beta1) * g[i];
      v[i] = spec_.beta2 * v[i] + (1.0 - spec_.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= lr * mhat / (std::sqrt(vhat) + spec_.adam_eps);
    }
  }
}

}  // namespace penex
