#pragma once

// Deterministic synthetic multi-speaker, multi-emotion corpora. Each token
// renders to one 11-dim frame from a closed form:
//   log-duration = log(1/rate) + c_dur(tok) - s * delta_log_rate
//   log-F0       = base_log_f0 + c_f0(tok) + s * delta_log_f0
//   log-energy   = c_en(tok) + s * delta_log_energy
//   envelope     = tilt + c_env(tok) + s * delta_tilt
// plus optional Gaussian observation noise.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "emovec/features.hpp"
#include "emovec/rng.hpp"

namespace emovec {

enum class Emotion { neutral, angry, sad, happy };

std::string_view to_string(Emotion e);
Emotion parse_emotion(std::string_view s);

struct SpeakerProfile {
  std::string id;
  double base_log_f0 = 0.0;
  double rate = 1.0;
  std::array<double, kEnvelopeDim> tilt{};
  bool seen = true;
  bool has_emotion_data = false;

  friend bool operator==(const SpeakerProfile&, const SpeakerProfile&) = default;
};

struct EmotionTransform {
  Emotion label = Emotion::neutral;
  double delta_log_f0 = 0.0;
  double delta_log_energy = 0.0;
  double delta_log_rate = 0.0;
  std::array<double, kEnvelopeDim> delta_tilt{};

  friend bool operator==(const EmotionTransform&, const EmotionTransform&) = default;
};

// Built-in transform magnitudes for the four styles.
EmotionTransform default_transform(Emotion e);

// Token-intrinsic contributions, drawn once per corpus seed.
struct TokenTable {
  std::array<double, kVocabSize> c_dur{};
  std::array<double, kVocabSize> c_f0{};
  std::array<double, kVocabSize> c_en{};
  std::array<std::array<double, kEnvelopeDim>, kVocabSize> c_env{};

  static TokenTable generate(std::uint64_t seed);
  friend bool operator==(const TokenTable&, const TokenTable&) = default;
};

struct Utterance {
  std::string id;
  std::string speaker;
  Emotion emotion = Emotion::neutral;
  double intensity = 0.0;
  std::vector<int> tokens;
  Frames features;

  friend bool operator==(const Utterance&, const Utterance&) = default;
};

// Noise-free closed form. Throws when intensity is outside [0, 1] or a
// token is outside the vocabulary.
Frames render_features(const TokenTable& table, std::span<const int> tokens, const SpeakerProfile& speaker,
                       const EmotionTransform& emotion, double intensity);

// Closed form plus N(0, sigma^2) noise per feature drawn from `noise`.
Frames render_features(const TokenTable& table, std::span<const int> tokens, const SpeakerProfile& speaker,
                       const EmotionTransform& emotion, double intensity, Rng& noise, double sigma);

struct CorpusConfig {
  int neutral_only_speakers = 8;
  int emotional_speakers = 4;
  int unseen_speakers = 2;
  int utterances_per_style = 200;
  int min_length = 4;
  int max_length = 24;
  double noise_sigma = 0.1;
  double emotion_intensity = 1.0;
  double train_fraction = 0.90;
  double val_fraction = 0.05;
  std::vector<Emotion> emotions{Emotion::angry, Emotion::sad, Emotion::happy};

  void validate() const;
  friend bool operator==(const CorpusConfig&, const CorpusConfig&) = default;
};

struct SplitSizes {
  int train = 0;
  int val = 0;
  int test = 0;
};

// Per-speaker, per-style split of n utterances.
SplitSizes split_sizes(int n, double train_fraction, double val_fraction);

struct Corpus {
  CorpusConfig config;
  std::uint64_t seed = 0;
  TokenTable tokens;
  std::vector<EmotionTransform> transforms;  // one per Emotion value, indexed by enum
  std::vector<SpeakerProfile> speakers;
  std::vector<Utterance> train;
  std::vector<Utterance> val;
  std::vector<Utterance> test;

  const SpeakerProfile& speaker(std::string_view id) const;
  const SpeakerProfile* find_speaker(std::string_view id) const;
  const EmotionTransform& transform(Emotion e) const { return transforms.at(static_cast<std::size_t>(e)); }

  friend bool operator==(const Corpus&, const Corpus&) = default;
};

// Speaker ids: s00.. neutral-only seen, e00.. emotional seen, u00.. unseen.
// Unseen speakers' utterances are all routed to the test split.
Corpus build_corpus(const CorpusConfig& config, std::uint64_t seed);

// Writes profiles.json and {train,val,test}.jsonl into `dir`.
void write_corpus(const Corpus& corpus, const std::filesystem::path& dir);
Corpus read_corpus(const std::filesystem::path& dir);

// Utterances from `split` filtered by speaker and emotion, in file order.
std::vector<const Utterance*> select(std::span<const Utterance> split, std::optional<std::string_view> speaker,
                                     std::optional<Emotion> emotion);

}  // namespace emovec
