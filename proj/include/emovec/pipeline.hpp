#pragma once

// End-to-end orchestration over one output directory:
//   corpus/                    profiles.json, {train,val,test}.jsonl, provenance.json
//   embedder.evc, speaker_vectors.json
//   checkpoints/pretrain.evc, ft_<emotion>.evc, tau_<emotion>.evc
//   checkpoints/baseline/<speaker>/{pretrain,ft_<emotion>,tau_<emotion>}.evc
//   reports/<scenario>/report.{json,md}
// Each stage reuses an existing artifact only when its recorded config hash
// matches the current config; otherwise it is rebuilt. Every artifact
// records the config hash and the hashes of its inputs.

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "emovec/config.hpp"
#include "emovec/eval_harness.hpp"

namespace emovec {

// SHA-256 over the corpus files, in a fixed order.
std::string corpus_hash(const std::filesystem::path& dir);

void write_speaker_table(const SpeakerVectorTable& table, const MetaMap& meta, const std::filesystem::path& path);
SpeakerVectorTable read_speaker_table(const std::filesystem::path& path, MetaMap* meta = nullptr);

class Pipeline {
 public:
  Pipeline(ExperimentConfig config, std::filesystem::path root);

  const ExperimentConfig& config() const { return config_; }
  const std::filesystem::path& root() const { return root_; }

  // Accessors build the stage (and its inputs) on first use. `rebuild_*`
  // discards any cached artifact of that stage first.
  const Corpus& corpus();
  const std::string& corpus_hash();
  const EmbedderModel& embedder();
  const SpeakerVectorTable& speaker_table();
  const ParameterSet& pretrained();
  const ParameterSet& finetuned(Emotion e);
  const EmotionVector& vector(Emotion e);
  const ParameterSet& baseline_pretrained(const std::string& speaker);
  const ParameterSet& baseline_finetuned(const std::string& speaker, Emotion e);
  const EmotionVector& baseline_vector(const std::string& speaker, Emotion e);

  void rebuild_corpus();
  void rebuild_embedder();
  void rebuild_pretrained();
  void rebuild_finetuned(Emotion e);

  // Runs one scenario and writes its report under reports/<name>.
  ScenarioReport run_scenario(const ScenarioSpec& spec);
  // Every configured scenario, optionally restricted to one case.
  std::vector<ScenarioReport> run_all(std::optional<ScenarioCase> only = std::nullopt);

  std::filesystem::path embedder_path() const { return root_ / "embedder.evc"; }
  std::filesystem::path speaker_table_path() const { return root_ / "speaker_vectors.json"; }
  std::filesystem::path checkpoint_path(const std::string& name) const { return root_ / "checkpoints" / name; }
  std::filesystem::path baseline_path(const std::string& speaker, const std::string& name) const {
    return root_ / "checkpoints" / "baseline" / speaker / name;
  }
  std::filesystem::path report_dir(const std::string& scenario) const { return root_ / "reports" / scenario; }

 private:
  std::optional<ParameterSet> load_cached(const std::filesystem::path& path) const;
  MetaMap provenance();
  std::string speaker_table_hash();

  ExperimentConfig config_;
  std::filesystem::path root_;
  std::optional<Corpus> corpus_;
  std::optional<std::string> corpus_hash_;
  std::optional<EmbedderModel> embedder_;
  std::optional<SpeakerVectorTable> table_;
  std::optional<std::string> table_hash_;
  std::optional<ParameterSet> pretrained_;
  std::map<Emotion, ParameterSet> finetuned_;
  std::map<Emotion, EmotionVector> vectors_;
  std::map<std::string, ParameterSet> baseline_pre_;
  std::map<std::pair<std::string, Emotion>, ParameterSet> baseline_ft_;
  std::map<std::pair<std::string, Emotion>, EmotionVector> baseline_vectors_;
};

}  // namespace emovec
