#pragma once

// x-vector analogue: per-utterance mean/std pooling of frames (22 dims),
// an affine bottleneck to 16 dims whose L2-normalized pre-activation is the
// embedding, and a softmax speaker-classification head used for training.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "emovec/features.hpp"
#include "emovec/param_store.hpp"
#include "emovec/synth_data.hpp"

namespace emovec {

inline constexpr std::size_t kPooledDim = 2 * kFeatureDim;
inline constexpr std::size_t kEmbeddingDim = kSpeakerDim;

using PooledStats = std::array<double, kPooledDim>;

// Mean then population standard deviation per feature dimension.
PooledStats pool_stats(std::span<const Frame> frames);

struct EmbedderModel {
  std::vector<std::string> speakers;   // class order
  std::vector<double> bottleneck_w;    // [16, 22]
  std::vector<double> bottleneck_b;    // [16]
  std::vector<double> head_w;          // [num_speakers, 16]
  std::vector<double> head_b;          // [num_speakers]

  std::size_t num_speakers() const { return speakers.size(); }
  std::array<double, kEmbeddingDim> bottleneck(std::span<const Frame> frames) const;
  std::vector<double> logits(std::span<const Frame> frames) const;
  // Index into `speakers`; ties resolve to the lowest index.
  std::size_t classify(std::span<const Frame> frames) const;

  // Persisted with meta.role = "embedder".
  ParameterSet to_params() const;
  static EmbedderModel from_params(const ParameterSet& params);

  friend bool operator==(const EmbedderModel&, const EmbedderModel&) = default;
};

struct EmbedderHyper {
  int steps = 3000;
  int batch_size = 64;
  double learning_rate = 0.05;
  double momentum = 0.9;
  std::uint64_t seed = 0;
};

struct EmbedderTraining {
  EmbedderModel model;
  double heldout_accuracy = 0.0;
};

// Trains on the neutral train utterances of seen speakers and reports
// accuracy on their neutral val + test utterances.
EmbedderTraining train_embedder(const Corpus& corpus, const EmbedderHyper& hyper);

double classification_accuracy(const EmbedderModel& model, std::span<const Utterance* const> utterances);

SpeakerEmbedding embed_utterance(const EmbedderModel& model, std::span<const Frame> frames);

// Mean of per-utterance embeddings, L2-normalized. The sum is taken in a
// canonical order so the result does not depend on input order.
SpeakerEmbedding speaker_vector(const EmbedderModel& model, std::span<const Frames> utterances);
SpeakerEmbedding speaker_vector(const EmbedderModel& model, std::span<const Utterance* const> utterances);

// Cosine similarity, clamped to [-1, 1]. Throws on a zero vector.
double secs(const SpeakerEmbedding& a, const SpeakerEmbedding& b);

// Seen speakers: averaged over neutral train utterances (source "train").
// Unseen speakers: averaged over their neutral test utterances, which act
// as the reference speech (source "reference").
SpeakerVectorTable build_speaker_table(const EmbedderModel& model, const Corpus& corpus);

}  // namespace emovec
