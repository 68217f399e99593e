#pragma once

#include "kws/ctc.hpp"
#include "kws/error.hpp"
#include "kws/network.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace kws {

struct TrainConfig {
  double learning_rate = 0.008;
  double momentum = 0.9;
  double init_range = 0.02;  // uniform(-init_range, +init_range)
  int batch_size = 16;       // utterances per batch
  int max_epochs = 50;
  double halving_improvement_threshold = 0.005;  // relative dev improvement
  double stop_lr = 1e-5;
  uint64_t seed = 1;
};

// Reduced-rate config for keyword-specific fine-tuning.
inline TrainConfig adapt_config(TrainConfig base) {
  base.learning_rate /= 10.0;
  return base;
}

// One training item: prepared network inputs (stacked, normalized) and the
// transcript label sequence.
template <class S>
struct Utterance {
  Mat<S> inputs;
  LabelSeq labels;
};

template <class S>
using TrainingSet = std::vector<Utterance<S>>;

struct EpochReport {
  int epoch = 0;
  double train_loss = 0.0;  // mean per-frame CTC loss over the epoch
  double dev_loss = 0.0;
  double learning_rate = 0.0;
  long skipped = 0;  // infeasible utterances excluded from the gradient
};

struct TrainReport {
  std::vector<EpochReport> epochs;
};

void write_train_report_csv(const std::string& path, const TrainReport& r);

template <class S>
struct MomentumState {
  std::vector<LayerParams<S>> velocity;

  static MomentumState zeros_like(const ModelParameters<S>& model) {
    MomentumState st;
    st.velocity.reserve(model.layers.size());
    for (const auto& l : model.layers)
      st.velocity.push_back({Mat<S>::Zero(l.weights.rows(), l.weights.cols()),
                             Vec<S>::Zero(l.bias.size())});
    return st;
  }
};

namespace detail {

// Uniform draw on [0,1) from the generator's raw bits. Written out so that
// models are bit-identical across standard libraries.
inline double uniform_unit(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

template <class T>
void fisher_yates_shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (size_t i = v.size(); i > 1; --i)
    std::swap(v[i - 1], v[rng() % i]);
}

}  // namespace detail

// Fresh model with every weight and bias i.i.d. uniform on
// (-init_range, +init_range), deterministic given the seed.
template <class S>
ModelParameters<S> initialize(const std::vector<Index>& dims,
                              const FeatureConfig& feature_config,
                              const std::vector<std::string>& inventory,
                              const TrainConfig& cfg) {
  if (dims.size() < 2)
    throw std::invalid_argument("initialize: need at least input+output dims");
  if (dims.back() != static_cast<Index>(inventory.size()))
    throw std::invalid_argument("initialize: output dim != inventory size");
  ModelParameters<S> model;
  model.feature_config = feature_config;
  model.phoneme_inventory = inventory;
  std::mt19937_64 rng(cfg.seed);
  const double r = cfg.init_range;
  for (size_t i = 0; i + 1 < dims.size(); ++i) {
    LayerParams<S> layer;
    layer.weights.resize(dims[i + 1], dims[i]);
    for (Index row = 0; row < layer.weights.rows(); ++row)
      for (Index col = 0; col < layer.weights.cols(); ++col)
        layer.weights(row, col) =
            static_cast<S>((2.0 * detail::uniform_unit(rng) - 1.0) * r);
    layer.bias.resize(dims[i + 1]);
    for (Index row = 0; row < layer.bias.size(); ++row)
      layer.bias[row] =
          static_cast<S>((2.0 * detail::uniform_unit(rng) - 1.0) * r);
    model.layers.push_back(std::move(layer));
  }
  return model;
}

// Mean per-frame CTC loss over a set; infeasible items are skipped and
// counted, never contributing.
template <class S>
std::pair<double, long> evaluate_loss(const ModelParameters<S>& model,
                                      const TrainingSet<S>& set) {
  double loss_sum = 0.0;
  long frames = 0, skipped = 0;
  for (const auto& utt : set) {
    if (utt.inputs.rows() < min_frames(utt.labels)) {
      ++skipped;
      continue;
    }
    const PosteriorGram<S> y = forward(model, utt.inputs);
    const CtcGradOut<S> out = loss_and_grad(utt.labels, y.probs);
    loss_sum += static_cast<double>(out.loss);
    frames += utt.inputs.rows();
  }
  return {frames > 0 ? loss_sum / static_cast<double>(frames) : 0.0, skipped};
}

// One shuffled pass over the training set in batches with Nesterov updates:
// gradient at the lookahead point theta + mu*v, averaged over batch frames,
// then v <- mu*v - lr*g and theta <- theta + v.
template <class S>
EpochReport train_epoch(ModelParameters<S>& model, const TrainingSet<S>& train,
                        const TrainingSet<S>& dev, const TrainConfig& cfg,
                        MomentumState<S>& state, std::mt19937_64& rng,
                        int epoch_index = 0) {
  if (train.empty()) throw std::invalid_argument("train_epoch: empty set");
  const size_t n_layers = model.layers.size();
  if (state.velocity.size() != n_layers)
    state = MomentumState<S>::zeros_like(model);

  std::vector<size_t> order(train.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  detail::fisher_yates_shuffle(order, rng);

  const S mu = static_cast<S>(cfg.momentum);
  const S lr = static_cast<S>(cfg.learning_rate);
  double loss_sum = 0.0;
  long frames_total = 0, skipped = 0;

  for (size_t begin = 0; begin < order.size();
       begin += static_cast<size_t>(cfg.batch_size)) {
    const size_t end =
        std::min(order.size(), begin + static_cast<size_t>(cfg.batch_size));

    ModelParameters<S> lookahead = model;
    for (size_t i = 0; i < n_layers; ++i) {
      lookahead.layers[i].weights += mu * state.velocity[i].weights;
      lookahead.layers[i].bias += mu * state.velocity[i].bias;
    }

    Gradients<S> grad_sum;
    grad_sum.layers.resize(n_layers);
    for (size_t i = 0; i < n_layers; ++i)
      grad_sum.layers[i] = {
          Mat<S>::Zero(model.layers[i].weights.rows(),
                       model.layers[i].weights.cols()),
          Vec<S>::Zero(model.layers[i].bias.size())};

    long batch_frames = 0;
    for (size_t k = begin; k < end; ++k) {
      const Utterance<S>& utt = train[order[k]];
      if (utt.inputs.rows() < min_frames(utt.labels)) {
        ++skipped;
        continue;
      }
      ForwardCache<S> cache;
      const PosteriorGram<S> y = forward(lookahead, utt.inputs, false, &cache);
      const CtcGradOut<S> out = loss_and_grad(utt.labels, y.probs);
      if (!std::isfinite(static_cast<double>(out.loss)))
        throw NumericError(
            "train_epoch: non-finite CTC loss (learning rate too high?) at "
            "epoch " +
            std::to_string(epoch_index));
      const Gradients<S> g = backward(lookahead, cache, out.grad_logits);
      for (size_t i = 0; i < n_layers; ++i) {
        grad_sum.layers[i].weights += g.layers[i].weights;
        grad_sum.layers[i].bias += g.layers[i].bias;
      }
      loss_sum += static_cast<double>(out.loss);
      batch_frames += utt.inputs.rows();
    }
    if (batch_frames == 0) continue;
    frames_total += batch_frames;

    const S scale = lr / static_cast<S>(batch_frames);
    for (size_t i = 0; i < n_layers; ++i) {
      state.velocity[i].weights =
          mu * state.velocity[i].weights - scale * grad_sum.layers[i].weights;
      state.velocity[i].bias =
          mu * state.velocity[i].bias - scale * grad_sum.layers[i].bias;
      model.layers[i].weights += state.velocity[i].weights;
      model.layers[i].bias += state.velocity[i].bias;
    }
  }

  EpochReport rep;
  rep.epoch = epoch_index;
  rep.train_loss =
      frames_total > 0 ? loss_sum / static_cast<double>(frames_total) : 0.0;
  const auto [dev_loss, dev_skipped] = evaluate_loss(model, dev);
  rep.dev_loss = dev_loss;
  rep.learning_rate = cfg.learning_rate;
  rep.skipped = skipped;
  return rep;
}

// Epoch loop with dev-driven learning-rate halving. Halves when the
// relative dev improvement over the previous epoch falls below the
// threshold; stops when the rate drops under stop_lr or epochs run out.
// Returns the parameters with the best dev loss seen.
template <class S>
std::pair<ModelParameters<S>, TrainReport> fit(ModelParameters<S> model,
                                               const TrainingSet<S>& train,
                                               const TrainingSet<S>& dev,
                                               const TrainConfig& cfg) {
  if (train.empty()) throw std::invalid_argument("fit: empty training set");
  TrainReport report;
  MomentumState<S> state = MomentumState<S>::zeros_like(model);
  std::mt19937_64 rng(cfg.seed);

  ModelParameters<S> best = model;
  double best_dev = std::numeric_limits<double>::infinity();
  double prev_dev = std::numeric_limits<double>::infinity();
  TrainConfig epoch_cfg = cfg;

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    if (epoch_cfg.learning_rate < cfg.stop_lr) break;
    EpochReport rep =
        train_epoch(model, train, dev, epoch_cfg, state, rng, epoch);
    report.epochs.push_back(rep);
    if (rep.dev_loss < best_dev) {
      best_dev = rep.dev_loss;
      best = model;
    }
    if (std::isfinite(prev_dev)) {
      const double rel =
          (prev_dev - rep.dev_loss) / std::max(std::abs(prev_dev), 1e-12);
      if (rel < cfg.halving_improvement_threshold)
        epoch_cfg.learning_rate /= 2.0;
    }
    prev_dev = rep.dev_loss;
  }
  return {std::move(best), std::move(report)};
}

// Keyword-specific fine-tuning: same loop, starting from a trained model,
// at the caller's reduced rate (see adapt_config).
template <class S>
std::pair<ModelParameters<S>, TrainReport> adapt(
    const ModelParameters<S>& model, const TrainingSet<S>& keyword_set,
    const TrainingSet<S>& dev, const TrainConfig& cfg) {
  return fit(model, keyword_set, dev, cfg);
}

}  // namespace kws
