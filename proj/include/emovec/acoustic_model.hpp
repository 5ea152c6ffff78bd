#pragma once

// Tiny token -> feature-frame regressor with additive speaker conditioning:
//   x  = [emb[token]; t / len]
//   h  = tanh(W1 x + b1)
//   h' = h + P s
//   y  = W3 tanh(W2 h' + b2) + b3
// Parameter names: emb, enc.w1, enc.b1, spk.proj, dec.w2, dec.b2, dec.w3,
// dec.b3. Matrices are stored row-major as [out, in].

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "emovec/features.hpp"
#include "emovec/param_store.hpp"
#include "emovec/synth_data.hpp"

namespace emovec {

struct ModelConfig {
  std::size_t vocab = kVocabSize;
  std::size_t embed_dim = 16;
  std::size_t hidden = 64;
  std::size_t speaker_dim = kSpeakerDim;
  std::size_t feature_dim = kFeatureDim;

  std::size_t input_dim() const { return embed_dim + 1; }
  // Tensor names and shapes, in lexicographic name order.
  std::vector<std::pair<std::string, Shape>> layout() const;
  void validate() const;
  // Dimensions read off a checkpoint's `emb` and `dec.w3` tensors; the rest of
  // the layout is checked when the parameters are loaded.
  static ModelConfig infer(const ParameterSet& params);
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Double-precision working copy of the parameters; also used for gradients.
struct DenseParams {
  ModelConfig config;
  std::vector<double> emb, w1, b1, proj, w2, b2, w3, b3;

  static DenseParams zeros(const ModelConfig& config);
  // Throws IncompatibleError if `params` does not have the config's layout.
  static DenseParams from_params(const ParameterSet& params, const ModelConfig& config = {});
  // Rounds every value to f32 once.
  ParameterSet to_params() const;

  std::vector<double>& tensor(std::string_view name);
  const std::vector<double>& tensor(std::string_view name) const;
  // Visits (name, values) in layout order.
  template <typename F>
  void for_each(F&& f) {
    for (const auto& [name, shape] : config.layout()) f(name, tensor(name));
  }
  template <typename F>
  void for_each(F&& f) const {
    for (const auto& [name, shape] : config.layout()) f(name, tensor(name));
  }
};

struct ForwardTrace {
  std::vector<int> tokens;
  std::vector<double> speaker;
  // Per token, flattened: x [in], h [hidden], h' [hidden], g [hidden], y [feature].
  std::vector<double> x, h, h_cond, g, y;
};

ForwardTrace forward_trace(const DenseParams& w, std::span<const int> tokens, std::span<const double> speaker);

Frames forward(const DenseParams& w, std::span<const int> tokens, std::span<const double> speaker);
Frames forward(const ParameterSet& params, std::span<const int> tokens, const SpeakerEmbedding& speaker,
               const ModelConfig& config = {});

// One training/evaluation example; views into caller-owned data.
struct Sample {
  std::span<const int> tokens;
  std::span<const Frame> target;
  std::span<const double> speaker;
};

// Samples for `utterances`, conditioned on each speaker's table entry.
std::vector<Sample> make_samples(std::span<const Utterance* const> utterances, const SpeakerVectorTable& table);
std::vector<Sample> make_samples(std::span<const Utterance> utterances, const SpeakerVectorTable& table);

struct LossAndGrad {
  double loss = 0.0;
  DenseParams grad;
};

// Mean squared error over every token and feature dimension of the batch.
double mse_loss(const DenseParams& w, std::span<const Sample> batch);
LossAndGrad loss_and_grad(const DenseParams& w, std::span<const Sample> batch);
LossAndGrad loss_and_grad(const ParameterSet& params, std::span<const Sample> batch, const ModelConfig& config = {});

// Glorot-uniform weights with a = sqrt(6 / (fan_in + fan_out)), zero biases.
ParameterSet init_params(const ModelConfig& config, std::uint64_t seed);

struct TrainHyper {
  int steps = 2000;
  double learning_rate = 0.01;
  double momentum = 0.9;
  int batch_size = 32;
  std::uint64_t seed = 0;
  std::string role = "pretrained";
  double divergence_threshold = 1e6;
  MetaMap extra_meta;
};

// SGD with momentum (v = mu v + g; w -= lr v) over shuffled epochs.
// Meta records role, steps, seed, init hash, final train and val MSE.
ParameterSet train(const ParameterSet& init, std::span<const Sample> train_set, std::span<const Sample> val_set,
                   const TrainHyper& hyper, const ModelConfig& config = {});

}  // namespace emovec
