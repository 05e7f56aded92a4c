#include "penex/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "penex/errors.hpp"

namespace penex {

void ModelSpec::validate() const {
  if (input_dim == 0) throw ParameterError("model: input_dim must be positive");
  for (auto h : hidden_dims)
    if (h == 0) throw ParameterError("model: hidden layer widths must be positive");
  if (num_classes < 2) throw ParameterError("model: need at least two classes");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0))
    throw ParameterError("model: dropout_p must lie in [0, 1)");
}

std::size_t ModelSpec::output_units() const {
  return static_cast<std::size_t>(conex_hard ? num_classes - 1 : num_classes);
}

std::vector<Tensor> Parameters::all() const {
  std::vector<Tensor> out;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    out.push_back(weights[l]);
    out.push_back(biases[l]);
  }
  return out;
}

std::size_t Parameters::count() const {
  std::size_t n = 0;
  for (const auto& t : all()) n += t.numel();
  return n;
}

Parameters Parameters::clone() const {
  Parameters p;
  for (const auto& w : weights) p.weights.push_back(w.clone());
  for (const auto& b : biases) p.biases.push_back(b.clone());
  return p;
}

std::vector<double> Parameters::flatten() const {
  std::vector<double> flat;
  for (const auto& t : all()) flat.insert(flat.end(), t.data().begin(), t.data().end());
  return flat;
}

void Parameters::assign(std::span<const double> flat) {
  if (flat.size() != count()) throw DimensionError("parameters: flat size mismatch");
  std::size_t off = 0;
  for (auto t : all()) {
    auto d = t.mutable_data();
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), d.size(), d.begin());
    off += d.size();
  }
}

Parameters init_model(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  Parameters p;
  std::size_t fan_in = spec.input_dim;
  auto add_layer = [&](std::size_t fan_out) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    std::vector<double> w(fan_out * fan_in);
    for (auto& v : w) v = u(rng);
    p.weights.push_back(Tensor::matrix(fan_out, fan_in, std::move(w), true));
    p.biases.push_back(Tensor::zeros({fan_out}, true));
    fan_in = fan_out;
  };
  for (auto h : spec.hidden_dims) add_layer(h);
  add_layer(spec.output_units());
  return p;
}

Tensor forward(const ModelSpec& spec, const Parameters& params, const Tensor& x,
               Rng* dropout_rng) {
  if (x.rank() != 2 || x.cols() != spec.input_dim)
    throw DimensionError("forward: expected n x " + std::to_string(spec.input_dim) + " input");
  Tensor h = x;
  const std::size_t layers = params.weights.size();
  for (std::size_t l = 0; l < layers; ++l) {
    h = linear(h, params.weights[l], params.biases[l]);
    if (l + 1 == layers) break;
    h = relu(h);
    if (dropout_rng && spec.dropout_p > 0.0) {
      std::bernoulli_distribution keep(1.0 - spec.dropout_p);
      const double scale_kept = 1.0 / (1.0 - spec.dropout_p);
      std::vector<double> mask(h.numel());
      for (auto& m : mask) m = keep(*dropout_rng) ? scale_kept : 0.0;
      h = mul(h, Tensor(h.shape(), std::move(mask)));
    }
  }
  return spec.conex_hard ? zero_sum_completion(h) : h;
}

}  // namespace penex
