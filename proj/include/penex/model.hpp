#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "penex/random.hpp"
#include "penex/tensor.hpp"

namespace penex {

/// Fully connected ReLU network; no hidden layers means a linear model.
struct ModelSpec {
  std::size_t input_dim = 2;
  std::vector<std::size_t> hidden_dims;
  int num_classes = 2;
  double dropout_p = 0.0;
  /// Emit K-1 free logits and append -(their sum), so rows sum to zero.
  bool conex_hard = false;

  void validate() const;
  std::size_t output_units() const;
};

/// Layer l maps x -> x * weights[l]^T + biases[l]; weights are out x in.
struct Parameters {
  std::vector<Tensor> weights;
  std::vector<Tensor> biases;

  /// weights and biases interleaved layer by layer.
  std::vector<Tensor> all() const;
  std::size_t count() const;
  Parameters clone() const;
  /// Flat copy in all() order.
  std::vector<double> flatten() const;
  void assign(std::span<const double> flat);
};

/// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero.
Parameters init_model(const ModelSpec& spec, std::uint64_t seed);

/// Logits [n x K]. Dropout is applied after each hidden activation only when
/// a generator is supplied (training mode).
Tensor forward(const ModelSpec& spec, const Parameters& params, const Tensor& x,
               Rng* dropout_rng = nullptr);

}  // namespace penex
