#include "emovec/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "emovec/error.hpp"
#include "emovec/hash.hpp"
#include "emovec/log.hpp"
#include "emovec/rng.hpp"

namespace emovec {
namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::error_code ec;
  fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
}

void save_artifact(const ParameterSet& p, const fs::path& path) {
  std::error_code ec;
  fs::create_directories(path.parent_path(), ec);
  if (ec) throw Error(ErrorKind::io, "cannot create " + path.parent_path().string() + ": " + ec.message());
  save(p, path);
}

std::string emotion_name(Emotion e) { return std::string(to_string(e)); }

std::uint64_t emotion_key(Emotion e) { return string_key(emotion_name(e).c_str()); }

TrainHyper phase_hyper(const PhaseConfig& p, std::uint64_t seed, const char* role, MetaMap meta) {
  TrainHyper h;
  h.steps = p.steps;
  h.learning_rate = p.learning_rate;
  h.momentum = p.momentum;
  h.batch_size = p.batch_size;
  h.seed = seed;
  h.role = role;
  h.extra_meta = std::move(meta);
  return h;
}

std::vector<const Utterance*> filter_speaker(std::span<const Utterance> split, const std::string& speaker,
                                             Emotion e) {
  return select(split, speaker, e);
}

}  // namespace

std::string corpus_hash(const fs::path& dir) {
  std::string all;
  for (const char* name : {"profiles.json", "train.jsonl", "val.jsonl", "test.jsonl"}) {
    all += name;
    all.push_back('\0');
    all += read_file(dir / name);
    all.push_back('\0');
  }
  return sha256_hex(all);
}

void write_speaker_table(const SpeakerVectorTable& table, const MetaMap& meta, const fs::path& path) {
  json speakers = json::object();
  for (const auto& [id, entry] : table) {
    speakers[id] = {{"values", entry.embedding.values},
                    {"normalized", entry.embedding.normalized},
                    {"source", entry.source}};
  }
  json j = {{"schema_version", 1}, {"meta", meta}, {"speakers", speakers}};
  write_file(path, j.dump(2) + "\n");
}

SpeakerVectorTable read_speaker_table(const fs::path& path, MetaMap* meta) {
  const std::string text = read_file(path);
  try {
    const json j = json::parse(text);
    if (j.at("schema_version").get<int>() != 1) throw Error(path.string() + ": unsupported schema_version");
    SpeakerVectorTable table;
    for (const auto& [id, e] : j.at("speakers").items()) {
      SpeakerVectorEntry entry;
      entry.embedding.values = e.at("values").get<std::vector<double>>();
      entry.embedding.normalized = e.at("normalized").get<bool>();
      entry.source = e.at("source").get<std::string>();
      if (entry.embedding.values.size() != kSpeakerDim) {
        throw Error(path.string() + ": speaker '" + id + "' vector must have " + std::to_string(kSpeakerDim) + " values");
      }
      table.emplace(id, std::move(entry));
    }
    if (meta) *meta = j.at("meta").get<MetaMap>();
    return table;
  } catch (const json::exception& e) {
    throw Error(path.string() + ": malformed speaker table: " + e.what());
  }
}

Pipeline::Pipeline(ExperimentConfig config, fs::path root) : config_(std::move(config)), root_(std::move(root)) {}

std::optional<ParameterSet> Pipeline::load_cached(const fs::path& path) const {
  if (!fs::exists(path)) return std::nullopt;
  try {
    ParameterSet p = load(path);
    if (p.meta_value("config_hash") == config_.hash) return p;
    log_info("rebuilding " + path.string() + ": produced by a different config");
  } catch (const std::exception& e) {
    log_warn("rebuilding " + path.string() + ": " + e.what());
  }
  return std::nullopt;
}

const Corpus& Pipeline::corpus() {
  if (corpus_) return *corpus_;
  const fs::path dir = root_ / "corpus";
  const fs::path stamp = dir / "provenance.json";
  if (fs::exists(stamp)) {
    try {
      const json j = json::parse(read_file(stamp));
      if (j.at("config_hash").get<std::string>() == config_.hash &&
          j.at("corpus_hash").get<std::string>() == emovec::corpus_hash(dir)) {
        corpus_ = read_corpus(dir);
        corpus_hash_ = j.at("corpus_hash").get<std::string>();
        return *corpus_;
      }
    } catch (const std::exception& e) {
      log_warn("rebuilding corpus: " + std::string(e.what()));
    }
  }
  rebuild_corpus();
  return *corpus_;
}

void Pipeline::rebuild_corpus() {
  const fs::path dir = root_ / "corpus";
  log_info("generating corpus (seed " + std::to_string(config_.corpus_seed) + ")");
  corpus_ = build_corpus(config_.corpus, config_.corpus_seed);
  write_corpus(*corpus_, dir);
  corpus_hash_ = emovec::corpus_hash(dir);
  json stamp = {{"config_hash", config_.hash}, {"corpus_hash", *corpus_hash_}};
  write_file(dir / "provenance.json", stamp.dump(2) + "\n");
}

const std::string& Pipeline::corpus_hash() {
  corpus();
  return *corpus_hash_;
}

const EmbedderModel& Pipeline::embedder() {
  if (embedder_) return *embedder_;
  if (auto cached = load_cached(embedder_path()); cached && cached->meta_value("corpus_hash") == corpus_hash()) {
    embedder_ = EmbedderModel::from_params(*cached);
    return *embedder_;
  }
  rebuild_embedder();
  return *embedder_;
}

void Pipeline::rebuild_embedder() {
  log_info("training speaker embedder");
  auto trained = train_embedder(corpus(), config_.embedder);
  ParameterSet p = trained.model.to_params();
  p.set_meta("config_hash", config_.hash);
  p.set_meta("corpus_hash", corpus_hash());
  p.set_meta(meta_keys::seed, std::to_string(config_.embedder.seed));
  p.set_meta(meta_keys::steps, std::to_string(config_.embedder.steps));
  p.set_meta("heldout_accuracy", format_double(trained.heldout_accuracy));
  save_artifact(p, embedder_path());
  log_info("embedder held-out accuracy " + format_double(trained.heldout_accuracy));
  embedder_ = std::move(trained.model);
  table_.reset();
  table_hash_.reset();
}

const SpeakerVectorTable& Pipeline::speaker_table() {
  if (table_) return *table_;
  const std::string embedder_hash = content_hash(embedder().to_params());
  if (fs::exists(speaker_table_path())) {
    try {
      MetaMap meta;
      auto table = read_speaker_table(speaker_table_path(), &meta);
      if (meta["config_hash"] == config_.hash && meta["embedder_hash"] == embedder_hash) {
        table_ = std::move(table);
        table_hash_ = sha256_hex(read_file(speaker_table_path()));
        return *table_;
      }
    } catch (const std::exception& e) {
      log_warn("rebuilding speaker table: " + std::string(e.what()));
    }
  }
  table_ = build_speaker_table(embedder(), corpus());
  MetaMap meta{{"config_hash", config_.hash}, {"corpus_hash", corpus_hash()}, {"embedder_hash", embedder_hash}};
  write_speaker_table(*table_, meta, speaker_table_path());
  table_hash_ = sha256_hex(read_file(speaker_table_path()));
  return *table_;
}

std::string Pipeline::speaker_table_hash() {
  speaker_table();
  return *table_hash_;
}

MetaMap Pipeline::provenance() {
  return {{"config_hash", config_.hash},
          {"corpus_hash", corpus_hash()},
          {"speaker_table_hash", speaker_table_hash()}};
}

const ParameterSet& Pipeline::pretrained() {
  if (pretrained_) return *pretrained_;
  if (auto cached = load_cached(checkpoint_path("pretrain.evc"))) {
    pretrained_ = std::move(*cached);
    return *pretrained_;
  }
  rebuild_pretrained();
  return *pretrained_;
}

void Pipeline::rebuild_pretrained() {
  const Corpus& c = corpus();
  const auto& table = speaker_table();
  const auto train_utts = select(c.train, std::nullopt, Emotion::neutral);
  const auto val_utts = select(c.val, std::nullopt, Emotion::neutral);
  const auto train_set = make_samples(train_utts, table);
  const auto val_set = make_samples(val_utts, table);
  MetaMap meta = provenance();
  meta[meta_keys::scope] = "multi";
  log_info("pretraining on " + std::to_string(train_set.size()) + " neutral utterances");
  pretrained_ = train(init_params(config_.model, config_.init_seed), train_set, val_set,
                      phase_hyper(config_.pretrain, config_.pretrain.seed, "pretrained", std::move(meta)), config_.model);
  save_artifact(*pretrained_, checkpoint_path("pretrain.evc"));
  finetuned_.clear();
  vectors_.clear();
}

const ParameterSet& Pipeline::finetuned(Emotion e) {
  if (auto it = finetuned_.find(e); it != finetuned_.end()) return it->second;
  if (auto cached = load_cached(checkpoint_path("ft_" + emotion_name(e) + ".evc"));
      cached && cached->meta_value("init_hash") == content_hash(pretrained())) {
    return finetuned_.insert_or_assign(e, std::move(*cached)).first->second;
  }
  rebuild_finetuned(e);
  return finetuned_.at(e);
}

void Pipeline::rebuild_finetuned(Emotion e) {
  if (e == Emotion::neutral) throw Error("finetune: emotion must be angry, sad or happy");
  const ParameterSet& pre = pretrained();
  const Corpus& c = corpus();
  const auto& table = speaker_table();
  const auto train_utts = select(c.train, std::nullopt, e);
  if (train_utts.empty()) throw Error("finetune: the corpus has no '" + emotion_name(e) + "' training utterances");
  const auto train_set = make_samples(train_utts, table);
  const auto val_set = make_samples(select(c.val, std::nullopt, e), table);
  MetaMap meta = provenance();
  meta[meta_keys::scope] = "multi";
  meta[meta_keys::emotion] = emotion_name(e);
  log_info("fine-tuning " + emotion_name(e) + " on " + std::to_string(train_set.size()) + " utterances");
  const auto seed = derive_seed(config_.finetune.seed, {emotion_key(e)});
  auto ft = train(pre, train_set, val_set, phase_hyper(config_.finetune, seed, "finetuned", std::move(meta)),
                  config_.model);
  save_artifact(ft, checkpoint_path("ft_" + emotion_name(e) + ".evc"));
  finetuned_.insert_or_assign(e, std::move(ft));
  vectors_.erase(e);
}

const EmotionVector& Pipeline::vector(Emotion e) {
  if (auto it = vectors_.find(e); it != vectors_.end()) return it->second;
  const auto path = checkpoint_path("tau_" + emotion_name(e) + ".evc");
  const ParameterSet& emo = finetuned(e);
  if (auto cached = load_cached(path); cached && cached->meta_value("source_emo") == content_hash(emo)) {
    return vectors_.emplace(e, EmotionVector(std::move(*cached))).first->second;
  }
  ParameterSet p = extract_vector(emo, pretrained(), emotion_name(e)).params();
  p.set_meta("config_hash", config_.hash);
  save_artifact(p, path);
  return vectors_.insert_or_assign(e, EmotionVector(std::move(p))).first->second;
}

// Single-speaker pair for the baseline: a model of one speaker's neutral
// speech and its emotional fine-tune, both without speaker conditioning.
const ParameterSet& Pipeline::baseline_pretrained(const std::string& speaker) {
  if (auto it = baseline_pre_.find(speaker); it != baseline_pre_.end()) return it->second;
  const Corpus& c = corpus();
  const auto* spk = c.find_speaker(speaker);
  if (!spk || !spk->seen || !spk->has_emotion_data) {
    throw Error("baseline source '" + speaker + "' must be a seen speaker with emotional data");
  }
  const auto path = baseline_path(speaker, "pretrain.evc");
  if (auto cached = load_cached(path)) return baseline_pre_.emplace(speaker, std::move(*cached)).first->second;

  const SpeakerVectorTable none{{speaker, {{std::vector<double>(kSpeakerDim, 0.0), false}, "none"}}};
  const auto train_set = make_samples(filter_speaker(c.train, speaker, Emotion::neutral), none);
  const auto val_set = make_samples(filter_speaker(c.val, speaker, Emotion::neutral), none);
  MetaMap meta{{"config_hash", config_.hash}, {"corpus_hash", corpus_hash()}, {"source_speaker", speaker},
               {"conditioning", "none"}, {meta_keys::scope, "single"}};
  log_info("pretraining single-speaker baseline for " + speaker);
  const auto seed = derive_seed(config_.pretrain.seed, {string_key(speaker.c_str())});
  auto p = train(init_params(config_.model, config_.init_seed), train_set, val_set,
                 phase_hyper(config_.pretrain, seed, "pretrained", std::move(meta)), config_.model);
  save_artifact(p, path);
  return baseline_pre_.emplace(speaker, std::move(p)).first->second;
}

const ParameterSet& Pipeline::baseline_finetuned(const std::string& speaker, Emotion e) {
  const auto key = std::make_pair(speaker, e);
  if (auto it = baseline_ft_.find(key); it != baseline_ft_.end()) return it->second;
  const ParameterSet& pre = baseline_pretrained(speaker);
  const auto path = baseline_path(speaker, "ft_" + emotion_name(e) + ".evc");
  if (auto cached = load_cached(path); cached && cached->meta_value("init_hash") == content_hash(pre)) {
    return baseline_ft_.emplace(key, std::move(*cached)).first->second;
  }
  const Corpus& c = corpus();
  const SpeakerVectorTable none{{speaker, {{std::vector<double>(kSpeakerDim, 0.0), false}, "none"}}};
  const auto train_utts = filter_speaker(c.train, speaker, e);
  if (train_utts.empty()) throw Error("baseline: speaker '" + speaker + "' has no '" + emotion_name(e) + "' training data");
  const auto train_set = make_samples(train_utts, none);
  const auto val_set = make_samples(filter_speaker(c.val, speaker, e), none);
  MetaMap meta{{"config_hash", config_.hash}, {"corpus_hash", corpus_hash()}, {"source_speaker", speaker},
               {"conditioning", "none"}, {meta_keys::scope, "single"}, {meta_keys::emotion, emotion_name(e)}};
  log_info("fine-tuning single-speaker baseline " + speaker + " " + emotion_name(e));
  const auto seed = derive_seed(config_.finetune.seed, {emotion_key(e), string_key(speaker.c_str())});
  auto p = train(pre, train_set, val_set, phase_hyper(config_.finetune, seed, "finetuned", std::move(meta)),
                 config_.model);
  save_artifact(p, path);
  return baseline_ft_.emplace(key, std::move(p)).first->second;
}

const EmotionVector& Pipeline::baseline_vector(const std::string& speaker, Emotion e) {
  const auto key = std::make_pair(speaker, e);
  if (auto it = baseline_vectors_.find(key); it != baseline_vectors_.end()) return it->second;
  const ParameterSet& emo = baseline_finetuned(speaker, e);
  const auto path = baseline_path(speaker, "tau_" + emotion_name(e) + ".evc");
  if (auto cached = load_cached(path); cached && cached->meta_value("source_emo") == content_hash(emo)) {
    return baseline_vectors_.emplace(key, EmotionVector(std::move(*cached))).first->second;
  }
  ParameterSet p = extract_vector(emo, baseline_pretrained(speaker), emotion_name(e)).params();
  p.set_meta("config_hash", config_.hash);
  p.set_meta("source_speaker", speaker);
  save_artifact(p, path);
  return baseline_vectors_.emplace(key, EmotionVector(std::move(p))).first->second;
}

ScenarioReport Pipeline::run_scenario(const ScenarioSpec& spec) {
  const Corpus& c = corpus();
  for (Emotion e : spec.emotions) {
    if (std::find(c.config.emotions.begin(), c.config.emotions.end(), e) == c.config.emotions.end()) {
      throw Error("scenario '" + spec.name + "': emotion '" + emotion_name(e) + "' is not in corpus.emotions");
    }
  }
  std::map<Emotion, EmotionVector> vectors;
  for (Emotion e : spec.emotions) {
    vectors.emplace(e, spec.source.scope == VectorScope::speaker_agnostic ? vector(e)
                                                                         : baseline_vector(spec.source.speaker, e));
  }
  MetaMap run_meta = provenance();
  run_meta["corpus_seed"] = std::to_string(config_.corpus_seed);
  run_meta["embedder_seed"] = std::to_string(config_.embedder.seed);
  run_meta["init_seed"] = std::to_string(config_.init_seed);
  run_meta["pretrain_seed"] = std::to_string(config_.pretrain.seed);
  run_meta["finetune_seed"] = std::to_string(config_.finetune.seed);
  const ScenarioArtifacts art{c, pretrained(), vectors, embedder(), speaker_table(), config_.model, run_meta};
  log_info("running scenario " + spec.name);
  auto report = emovec::run_scenario(spec, art);
  write_report(report, report_dir(spec.name));
  return report;
}

std::vector<ScenarioReport> Pipeline::run_all(std::optional<ScenarioCase> only) {
  std::vector<ScenarioReport> out;
  for (const auto& spec : config_.scenarios) {
    if (only && spec.scenario_case != *only) continue;
    out.push_back(run_scenario(spec));
  }
  return out;
}

}  // namespace emovec
