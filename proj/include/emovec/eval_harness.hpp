#pragma once

// Objective stand-ins for the listening tests: speaker consistency via
// embedding cosine similarity, and intensity ordering via projection of
// synthesized frames onto each emotion's known direction in feature space.

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "emovec/acoustic_model.hpp"
#include "emovec/speaker_embed.hpp"
#include "emovec/synth_data.hpp"
#include "emovec/vector_arith.hpp"

namespace emovec {

enum class ScenarioCase { same_spk, cross_seen, cross_unseen };

std::string_view to_string(ScenarioCase c);
ScenarioCase parse_scenario_case(std::string_view s);

struct VectorSource {
  VectorScope scope = VectorScope::speaker_agnostic;
  std::string speaker;  // source speaker for single-speaker vectors

  std::string describe() const;
  static VectorSource parse(std::string_view s);  // "speaker_agnostic" or "single_speaker:<id>"
  friend bool operator==(const VectorSource&, const VectorSource&) = default;
};

struct ScenarioSpec {
  std::string name;
  ScenarioCase scenario_case = ScenarioCase::cross_seen;
  std::vector<std::string> targets;  // empty: chosen by default_targets
  std::vector<Emotion> emotions{Emotion::angry, Emotion::sad, Emotion::happy};
  std::vector<double> alphas{0.1, 0.5, 0.9};
  VectorSource source;
  int sentences_per_target = 10;
  // SECS is taken at this alpha when listed, otherwise at the largest alpha.
  double secs_alpha = 0.9;

  friend bool operator==(const ScenarioSpec&, const ScenarioSpec&) = default;
};

// Up to `max_targets` corpus speakers eligible for the case, in corpus order.
std::vector<std::string> default_targets(ScenarioCase c, const Corpus& corpus, std::size_t max_targets = 4);

// Checks target eligibility against the corpus flags.
void validate_scenario(const ScenarioSpec& spec, const Corpus& corpus);

// Unit direction per emotion: normalized mean of (noise-free frames at
// intensity 1 - at intensity 0) over every speaker and token.
struct IntensityEstimator {
  std::map<Emotion, Frame> directions;

  static IntensityEstimator from_corpus(const Corpus& corpus);
  const Frame& direction(Emotion e) const;
  // Mean over tokens of direction . (frames - neutral).
  double score(Emotion e, const Frames& frames, const Frames& neutral) const;
};

struct SecsSummary {
  std::vector<double> per_sentence;
  double mean = 0.0;
  double half_width = 0.0;  // 95% normal approximation

  friend bool operator==(const SecsSummary&, const SecsSummary&) = default;
};

SecsSummary summarize_secs(std::vector<double> per_sentence);

// Pairs emotional[i] with neutral[i] (same sentence) and summarizes SECS.
SecsSummary secs_eval(const std::vector<Frames>& emotional, const std::vector<Frames>& neutral,
                      const EmbedderModel& embedder);

inline constexpr std::array<const char*, 3> kIntensityLevels{"weak", "medium", "strong"};

struct ConfusionMatrix {
  // rows: true intensity slot, columns: perceived slot; row-stochastic.
  std::array<std::array<double, 3>, 3> rates{};
  double mean_diagonal = 0.0;
  double monotonic_fraction = 0.0;
  std::size_t sentences = 0;

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

// scores[sentence][k] is the intensity score of the synthesis at alphas[k].
// Each sentence's three scores are ranked; tied slots are declared
// misordered by rotating their ranks.
ConfusionMatrix ordering_confusion(const std::vector<std::vector<double>>& scores, const std::vector<double>& alphas);

// synth[k][sentence] are frames synthesized at alphas[k]; neutral[sentence]
// are the same sentences from the unedited model.
ConfusionMatrix intensity_ordering_eval(const std::vector<std::vector<Frames>>& synth, const std::vector<double>& alphas,
                                        Emotion emotion, const IntensityEstimator& estimator,
                                        const std::vector<Frames>& neutral);

struct TargetResult {
  std::string speaker;
  double own_secs = 0.0;
  double cross_secs = 0.0;
  double margin = 0.0;
  double monotonic_fraction = 0.0;

  friend bool operator==(const TargetResult&, const TargetResult&) = default;
};

struct EmotionResult {
  Emotion emotion = Emotion::neutral;
  SecsSummary secs;  // own-neutral SECS of every target sentence
  std::vector<TargetResult> targets;
  double mean_margin = 0.0;
  std::optional<ConfusionMatrix> confusion;
  TensorStats vector_stats;
  std::string vector_hash;

  friend bool operator==(const EmotionResult&, const EmotionResult&) = default;
};

struct ScenarioReport {
  int schema_version = 1;
  std::string name;
  ScenarioCase scenario_case = ScenarioCase::cross_seen;
  std::string vector_source;
  std::vector<double> alphas;
  double secs_alpha = 0.0;
  std::vector<std::string> targets;
  std::vector<EmotionResult> emotions;
  MetaMap run_meta;

  friend bool operator==(const ScenarioReport&, const ScenarioReport&) = default;
};

struct ScenarioArtifacts {
  const Corpus& corpus;
  const ParameterSet& pretrained;
  const std::map<Emotion, EmotionVector>& vectors;
  const EmbedderModel& embedder;
  const SpeakerVectorTable& speaker_vectors;
  ModelConfig model;
  MetaMap run_meta;
};

ScenarioReport run_scenario(const ScenarioSpec& spec, const ScenarioArtifacts& artifacts);

std::string report_to_json(const ScenarioReport& report);
ScenarioReport report_from_json(const std::string& text);
std::string report_to_markdown(const ScenarioReport& report);

// Writes report.json and report.md into `dir`.
void write_report(const ScenarioReport& report, const std::filesystem::path& dir);

}  // namespace emovec
