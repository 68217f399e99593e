#pragma once

#include "kws/error.hpp"
#include "kws/features.hpp"
#include "kws/types.hpp"

#include <string>
#include <vector>

namespace kws {

enum class Nonlinearity : uint32_t { kRelu = 0, kIdentity = 1 };

// One affine layer: weights are n_i x n_{i-1}, bias length n_i.
template <class S>
struct LayerParams {
  Mat<S> weights;
  Vec<S> bias;
};

// Full parameter set of the acoustic network plus everything needed to
// reproduce its input features. Immutable after load; forward passes may
// share one instance across threads.
template <class S>
struct ModelParameters {
  std::vector<LayerParams<S>> layers;  // N hidden + 1 output
  Nonlinearity nonlinearity = Nonlinearity::kRelu;
  FeatureConfig feature_config;
  std::vector<std::string> phoneme_inventory;  // blank at index 0

  Index input_dim() const {
    return layers.empty() ? 0 : layers.front().weights.cols();
  }
  Index output_dim() const {
    return layers.empty() ? 0 : layers.back().weights.rows();
  }

  template <class T>
  ModelParameters<T> cast() const {
    ModelParameters<T> out;
    out.nonlinearity = nonlinearity;
    out.feature_config = feature_config;
    out.phoneme_inventory = phoneme_inventory;
    out.layers.reserve(layers.size());
    for (const auto& l : layers)
      out.layers.push_back({l.weights.template cast<T>(),
                            l.bias.template cast<T>()});
    return out;
  }
};

// Per-frame label probabilities; logits are retained only when the caller
// asks (training), inference keeps just the probabilities.
template <class S>
struct PosteriorGram {
  Mat<S> probs;
  Mat<S> logits;
};

// Post-nonlinearity activations x^0..x^N, needed by backward.
template <class S>
struct ForwardCache {
  std::vector<Mat<S>> activations;
};

template <class S>
struct Gradients {
  std::vector<LayerParams<S>> layers;
};

template <class S>
Mat<S> softmax_rows(const Mat<S>& logits) {
  Mat<S> probs(logits.rows(), logits.cols());
  for (Index t = 0; t < logits.rows(); ++t) {
    const S row_max = logits.row(t).maxCoeff();
    probs.row(t) = (logits.row(t).array() - row_max).exp();
    probs.row(t) /= probs.row(t).sum();
  }
  return probs;
}

// Affine layers with the configured nonlinearity, then a stable softmax.
// One matrix row per frame.
template <class S>
PosteriorGram<S> forward(const ModelParameters<S>& model, const Mat<S>& inputs,
                         bool keep_logits = false,
                         ForwardCache<S>* cache = nullptr) {
  if (inputs.cols() != model.input_dim())
    throw DataError("network: input dim " + std::to_string(inputs.cols()) +
                    " != layer 0 expects " +
                    std::to_string(model.input_dim()));
  if (cache) {
    cache->activations.clear();
    cache->activations.push_back(inputs);
  }
  Mat<S> x = inputs;
  const size_t n_layers = model.layers.size();
  for (size_t i = 0; i + 1 < n_layers; ++i) {
    const auto& l = model.layers[i];
    if (x.cols() != l.weights.cols())
      throw DataError("network: dim mismatch at layer " + std::to_string(i));
    Mat<S> a = (x * l.weights.transpose()).rowwise() + l.bias.transpose();
    if (model.nonlinearity == Nonlinearity::kRelu)
      a = a.cwiseMax(S(0));
    x = std::move(a);
    if (cache) cache->activations.push_back(x);
  }
  const auto& out_layer = model.layers.back();
  if (x.cols() != out_layer.weights.cols())
    throw DataError("network: dim mismatch at layer " +
                    std::to_string(n_layers - 1));
  Mat<S> logits =
      (x * out_layer.weights.transpose()).rowwise() +
      out_layer.bias.transpose();

  PosteriorGram<S> y;
  y.probs = softmax_rows(logits);
  if (keep_logits) y.logits = std::move(logits);
  return y;
}

// Exact gradients of a scalar loss w.r.t. every weight and bias, given the
// loss gradient at the output logits. The ReLU subgradient at 0 is 0.
template <class S>
Gradients<S> backward(const ModelParameters<S>& model,
                      const ForwardCache<S>& cache,
                      const Mat<S>& grad_logits) {
  const size_t n_layers = model.layers.size();
  if (cache.activations.size() != n_layers)
    throw DataError("network: forward cache missing or stale (" +
                    std::to_string(cache.activations.size()) + " activations, " +
                    std::to_string(n_layers) + " layers)");
  Gradients<S> grads;
  grads.layers.resize(n_layers);

  Mat<S> g = grad_logits;  // dLoss/dZ of the current layer
  for (size_t i = n_layers; i-- > 0;) {
    const Mat<S>& below = cache.activations[i];
    grads.layers[i].weights = g.transpose() * below;
    grads.layers[i].bias = g.colwise().sum().transpose();
    if (i == 0) break;
    Mat<S> gx = g * model.layers[i].weights;
    if (model.nonlinearity == Nonlinearity::kRelu)
      gx = gx.cwiseProduct(
          (below.array() > S(0)).template cast<S>().matrix());
    g = std::move(gx);
  }
  return grads;
}

// Total weights plus biases.
template <class S>
long count_parameters(const ModelParameters<S>& model) {
  long n = 0;
  for (const auto& l : model.layers)
    n += static_cast<long>(l.weights.size()) + static_cast<long>(l.bias.size());
  return n;
}

// Multiply count of one frame through all layers (parameters minus biases).
template <class S>
long count_multiplies_per_frame(const ModelParameters<S>& model) {
  long n = 0;
  for (const auto& l : model.layers) n += static_cast<long>(l.weights.size());
  return n;
}

}  // namespace kws
