#include "emovec/synth_data.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "emovec/error.hpp"

namespace emovec {
namespace {

using nlohmann::json;
// Utterance lines store features as float so they re-parse bit-exactly
// without 17-digit double output.
using fjson = nlohmann::basic_json<std::map, std::vector, std::string, bool, std::int64_t, std::uint64_t, float>;

constexpr double kSpeakerF0Spread = 0.3;
constexpr double kSpeakerLogRateSpread = 0.1;
constexpr double kSpeakerTiltSpread = 0.4;
constexpr double kTokenDurSpread = 0.2;
constexpr double kTokenF0Spread = 0.2;
constexpr double kTokenEnergySpread = 0.3;
constexpr double kTokenEnvSpread = 0.3;

// Out of line on purpose: GCC 11 at -O3 SLP-vectorizes the inlined
// double -> float -> double round trip over a Frame and drops it for some lanes.
[[gnu::noinline]] void round_to_float(Frame& f) {
  for (auto& v : f) v = static_cast<float>(v);
}

std::string speaker_id(char prefix, int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%c%02d", prefix, index);
  return buf;
}

SpeakerProfile make_speaker(std::string id, std::uint64_t seed, bool seen, bool has_emotion) {
  Rng rng(derive_seed(seed, {string_key("speaker"), string_key(id.c_str())}));
  SpeakerProfile p;
  p.id = std::move(id);
  p.base_log_f0 = rng.normal(0.0, kSpeakerF0Spread);
  p.rate = std::exp(rng.normal(0.0, kSpeakerLogRateSpread));
  for (auto& t : p.tilt) t = rng.normal(0.0, kSpeakerTiltSpread);
  p.seen = seen;
  p.has_emotion_data = has_emotion;
  return p;
}

Utterance make_utterance(const Corpus& c, const SpeakerProfile& spk, Emotion emotion, int index) {
  Rng rng(derive_seed(c.seed, {string_key("utterance"), string_key(spk.id.c_str()),
                               static_cast<std::uint64_t>(emotion), static_cast<std::uint64_t>(index)}));
  Utterance u;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s-%s-%04d", spk.id.c_str(), std::string(to_string(emotion)).c_str(), index);
  u.id = buf;
  u.speaker = spk.id;
  u.emotion = emotion;
  u.intensity = emotion == Emotion::neutral ? 0.0 : static_cast<float>(c.config.emotion_intensity);
  const auto span = static_cast<std::uint64_t>(c.config.max_length - c.config.min_length + 1);
  const auto length = c.config.min_length + static_cast<int>(rng.below(span));
  u.tokens.resize(static_cast<std::size_t>(length));
  for (auto& t : u.tokens) t = static_cast<int>(rng.below(kVocabSize));
  u.features = render_features(c.tokens, u.tokens, spk, c.transform(emotion), u.intensity, rng, c.config.noise_sigma);
  // Round through float once so the stored corpus is exactly what is used.
  for (auto& f : u.features) round_to_float(f);
  return u;
}

json transform_to_json(const EmotionTransform& t) {
  return {{"label", to_string(t.label)},
          {"delta_log_f0", t.delta_log_f0},
          {"delta_log_energy", t.delta_log_energy},
          {"delta_log_rate", t.delta_log_rate},
          {"delta_tilt", t.delta_tilt}};
}

EmotionTransform transform_from_json(const json& j) {
  EmotionTransform t;
  t.label = parse_emotion(j.at("label").get<std::string>());
  t.delta_log_f0 = j.at("delta_log_f0").get<double>();
  t.delta_log_energy = j.at("delta_log_energy").get<double>();
  t.delta_log_rate = j.at("delta_log_rate").get<double>();
  t.delta_tilt = j.at("delta_tilt").get<std::array<double, kEnvelopeDim>>();
  return t;
}

json config_to_json(const CorpusConfig& c) {
  json emotions = json::array();
  for (auto e : c.emotions) emotions.push_back(to_string(e));
  return {{"neutral_only_speakers", c.neutral_only_speakers},
          {"emotional_speakers", c.emotional_speakers},
          {"unseen_speakers", c.unseen_speakers},
          {"utterances_per_style", c.utterances_per_style},
          {"min_length", c.min_length},
          {"max_length", c.max_length},
          {"noise_sigma", c.noise_sigma},
          {"emotion_intensity", c.emotion_intensity},
          {"train_fraction", c.train_fraction},
          {"val_fraction", c.val_fraction},
          {"emotions", emotions}};
}

CorpusConfig config_from_json(const json& j) {
  CorpusConfig c;
  c.neutral_only_speakers = j.at("neutral_only_speakers").get<int>();
  c.emotional_speakers = j.at("emotional_speakers").get<int>();
  c.unseen_speakers = j.at("unseen_speakers").get<int>();
  c.utterances_per_style = j.at("utterances_per_style").get<int>();
  c.min_length = j.at("min_length").get<int>();
  c.max_length = j.at("max_length").get<int>();
  c.noise_sigma = j.at("noise_sigma").get<double>();
  c.emotion_intensity = j.at("emotion_intensity").get<double>();
  c.train_fraction = j.at("train_fraction").get<double>();
  c.val_fraction = j.at("val_fraction").get<double>();
  c.emotions.clear();
  for (const auto& e : j.at("emotions")) c.emotions.push_back(parse_emotion(e.get<std::string>()));
  return c;
}

fjson utterance_to_json(const Utterance& u) {
  fjson features = fjson::array();
  for (const auto& f : u.features) {
    fjson row = fjson::array();
    for (double v : f) row.push_back(static_cast<float>(v));
    features.push_back(std::move(row));
  }
  return {{"id", u.id},
          {"speaker", u.speaker},
          {"emotion", to_string(u.emotion)},
          {"intensity", static_cast<float>(u.intensity)},
          {"tokens", u.tokens},
          {"features", std::move(features)}};
}

Utterance utterance_from_json(const fjson& j) {
  Utterance u;
  u.id = j.at("id").get<std::string>();
  u.speaker = j.at("speaker").get<std::string>();
  u.emotion = parse_emotion(j.at("emotion").get<std::string>());
  u.intensity = j.at("intensity").get<float>();
  u.tokens = j.at("tokens").get<std::vector<int>>();
  for (const auto& row : j.at("features")) {
    if (row.size() != kFeatureDim) throw Error("utterance " + u.id + " has a frame of wrong dimension");
    Frame f{};
    for (std::size_t d = 0; d < kFeatureDim; ++d) f[d] = row[d].get<float>();
    u.features.push_back(f);
  }
  if (u.features.size() != u.tokens.size()) throw Error("utterance " + u.id + " has features/tokens length mismatch");
  return u;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw Error(ErrorKind::io, "write to '" + path.string() + "' failed");
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::string_view to_string(Emotion e) {
  switch (e) {
    case Emotion::neutral: return "neutral";
    case Emotion::angry: return "angry";
    case Emotion::sad: return "sad";
    case Emotion::happy: return "happy";
  }
  return "neutral";
}

Emotion parse_emotion(std::string_view s) {
  if (s == "neutral") return Emotion::neutral;
  if (s == "angry") return Emotion::angry;
  if (s == "sad") return Emotion::sad;
  if (s == "happy") return Emotion::happy;
  throw Error("unknown emotion label '" + std::string(s) + "' (expected neutral, angry, sad or happy)");
}

EmotionTransform default_transform(Emotion e) {
  EmotionTransform t;
  t.label = e;
  switch (e) {
    case Emotion::neutral:
      break;
    case Emotion::angry:
      t.delta_log_f0 = 0.30;
      t.delta_log_energy = 0.40;
      t.delta_log_rate = 0.10;
      for (std::size_t k = 4; k < kEnvelopeDim; ++k) t.delta_tilt[k] = 0.2;
      break;
    case Emotion::sad:
      t.delta_log_f0 = -0.25;
      t.delta_log_energy = -0.30;
      t.delta_log_rate = -0.15;
      for (std::size_t k = 4; k < kEnvelopeDim; ++k) t.delta_tilt[k] = -0.2;
      break;
    case Emotion::happy:
      t.delta_log_f0 = 0.20;
      t.delta_log_energy = 0.20;
      t.delta_log_rate = 0.10;
      for (std::size_t k = 2; k < 6; ++k) t.delta_tilt[k] = 0.1;
      break;
  }
  return t;
}

TokenTable TokenTable::generate(std::uint64_t seed) {
  Rng rng(derive_seed(seed, {string_key("tokens")}));
  TokenTable t;
  for (std::size_t v = 0; v < kVocabSize; ++v) {
    t.c_dur[v] = rng.normal(0.0, kTokenDurSpread);
    t.c_f0[v] = rng.normal(0.0, kTokenF0Spread);
    t.c_en[v] = rng.normal(0.0, kTokenEnergySpread);
    for (auto& x : t.c_env[v]) x = rng.normal(0.0, kTokenEnvSpread);
  }
  return t;
}

Frames render_features(const TokenTable& table, std::span<const int> tokens, const SpeakerProfile& speaker,
                       const EmotionTransform& emotion, double intensity) {
  if (!(intensity >= 0.0 && intensity <= 1.0)) {
    throw Error("render_features: intensity " + std::to_string(intensity) + " is outside [0, 1]");
  }
  if (!(speaker.rate > 0.0)) throw Error("render_features: speaker '" + speaker.id + "' has non-positive rate");
  const double s = intensity;
  Frames frames;
  frames.reserve(tokens.size());
  for (int tok : tokens) {
    if (tok < 0 || static_cast<std::size_t>(tok) >= kVocabSize) {
      throw Error("render_features: token " + std::to_string(tok) + " outside [0, 31]");
    }
    const auto v = static_cast<std::size_t>(tok);
    Frame f{};
    f[feature_index::log_duration] = std::log(1.0 / speaker.rate) + table.c_dur[v] - s * emotion.delta_log_rate;
    f[feature_index::log_f0] = speaker.base_log_f0 + table.c_f0[v] + s * emotion.delta_log_f0;
    f[feature_index::log_energy] = table.c_en[v] + s * emotion.delta_log_energy;
    for (std::size_t k = 0; k < kEnvelopeDim; ++k) {
      f[feature_index::envelope + k] = speaker.tilt[k] + table.c_env[v][k] + s * emotion.delta_tilt[k];
    }
    frames.push_back(f);
  }
  return frames;
}

Frames render_features(const TokenTable& table, std::span<const int> tokens, const SpeakerProfile& speaker,
                       const EmotionTransform& emotion, double intensity, Rng& noise, double sigma) {
  Frames frames = render_features(table, tokens, speaker, emotion, intensity);
  for (auto& f : frames)
    for (auto& v : f) v += sigma * noise.normal();
  return frames;
}

void CorpusConfig::validate() const {
  if (neutral_only_speakers < 0 || emotional_speakers < 0 || unseen_speakers < 0) {
    throw Error("corpus: speaker counts must be non-negative");
  }
  if (neutral_only_speakers + emotional_speakers < 2) throw Error("corpus: need at least 2 seen speakers");
  if (neutral_only_speakers > 99 || emotional_speakers > 99 || unseen_speakers > 99) {
    throw Error("corpus: at most 99 speakers per group");
  }
  if (min_length < 1 || max_length < min_length) throw Error("corpus: need 1 <= min_length <= max_length");
  if (!(noise_sigma >= 0.0)) throw Error("corpus: noise_sigma must be >= 0");
  if (!(emotion_intensity >= 0.0 && emotion_intensity <= 1.0)) throw Error("corpus: emotion_intensity outside [0, 1]");
  if (!(train_fraction > 0.0 && val_fraction >= 0.0 && train_fraction + val_fraction < 1.0)) {
    throw Error("corpus: split fractions must satisfy 0 < train, 0 <= val, train + val < 1");
  }
  const auto sizes = split_sizes(utterances_per_style, train_fraction, val_fraction);
  if (utterances_per_style < 1 || sizes.train < 1 || sizes.val < 1 || sizes.test < 1) {
    throw Error("corpus: utterances_per_style " + std::to_string(utterances_per_style) +
                " leaves an empty train/val/test split");
  }
  for (auto e : emotions) {
    if (e == Emotion::neutral) throw Error("corpus: emotions list must not contain neutral");
  }
}

SplitSizes split_sizes(int n, double train_fraction, double val_fraction) {
  SplitSizes s;
  s.train = static_cast<int>(std::lround(train_fraction * n));
  s.val = static_cast<int>(std::lround(val_fraction * n));
  s.test = n - s.train - s.val;
  return s;
}

const SpeakerProfile* Corpus::find_speaker(std::string_view id) const {
  for (const auto& s : speakers)
    if (s.id == id) return &s;
  return nullptr;
}

const SpeakerProfile& Corpus::speaker(std::string_view id) const {
  if (const auto* s = find_speaker(id)) return *s;
  throw Error("corpus has no speaker '" + std::string(id) + "'");
}

Corpus build_corpus(const CorpusConfig& config, std::uint64_t seed) {
  config.validate();
  Corpus c;
  c.config = config;
  c.seed = seed;
  c.tokens = TokenTable::generate(seed);
  for (auto e : {Emotion::neutral, Emotion::angry, Emotion::sad, Emotion::happy}) {
    c.transforms.push_back(default_transform(e));
  }
  for (int i = 0; i < config.neutral_only_speakers; ++i) c.speakers.push_back(make_speaker(speaker_id('s', i), seed, true, false));
  for (int i = 0; i < config.emotional_speakers; ++i) c.speakers.push_back(make_speaker(speaker_id('e', i), seed, true, true));
  for (int i = 0; i < config.unseen_speakers; ++i) c.speakers.push_back(make_speaker(speaker_id('u', i), seed, false, false));

  const auto sizes = split_sizes(config.utterances_per_style, config.train_fraction, config.val_fraction);
  for (const auto& spk : c.speakers) {
    std::vector<Emotion> styles{Emotion::neutral};
    if (spk.has_emotion_data) styles.insert(styles.end(), config.emotions.begin(), config.emotions.end());
    for (auto style : styles) {
      for (int i = 0; i < config.utterances_per_style; ++i) {
        auto u = make_utterance(c, spk, style, i);
        if (!spk.seen || i >= sizes.train + sizes.val) {
          c.test.push_back(std::move(u));
        } else if (i < sizes.train) {
          c.train.push_back(std::move(u));
        } else {
          c.val.push_back(std::move(u));
        }
      }
    }
  }
  return c;
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::io, "cannot create '" + dir.string() + "': " + ec.message());

  json speakers = json::array();
  for (const auto& s : corpus.speakers) {
    speakers.push_back({{"id", s.id},
                        {"base_log_f0", s.base_log_f0},
                        {"rate", s.rate},
                        {"tilt", s.tilt},
                        {"seen", s.seen},
                        {"has_emotion_data", s.has_emotion_data}});
  }
  json transforms = json::array();
  for (const auto& t : corpus.transforms) transforms.push_back(transform_to_json(t));
  json profiles = {{"schema_version", 1},
                   {"seed", corpus.seed},
                   {"config", config_to_json(corpus.config)},
                   {"token_table",
                    {{"c_dur", corpus.tokens.c_dur},
                     {"c_f0", corpus.tokens.c_f0},
                     {"c_en", corpus.tokens.c_en},
                     {"c_env", corpus.tokens.c_env}}},
                   {"emotion_transforms", transforms},
                   {"speakers", speakers}};
  write_text(dir / "profiles.json", profiles.dump(2) + "\n");

  const auto write_split = [&](const char* name, const std::vector<Utterance>& split) {
    std::string text;
    for (const auto& u : split) text += utterance_to_json(u).dump() + "\n";
    write_text(dir / name, text);
  };
  write_split("train.jsonl", corpus.train);
  write_split("val.jsonl", corpus.val);
  write_split("test.jsonl", corpus.test);
}

Corpus read_corpus(const std::filesystem::path& dir) {
  Corpus c;
  try {
    const json p = json::parse(read_text(dir / "profiles.json"));
    c.seed = p.at("seed").get<std::uint64_t>();
    c.config = config_from_json(p.at("config"));
    const auto& tt = p.at("token_table");
    c.tokens.c_dur = tt.at("c_dur").get<std::array<double, kVocabSize>>();
    c.tokens.c_f0 = tt.at("c_f0").get<std::array<double, kVocabSize>>();
    c.tokens.c_en = tt.at("c_en").get<std::array<double, kVocabSize>>();
    c.tokens.c_env = tt.at("c_env").get<std::array<std::array<double, kEnvelopeDim>, kVocabSize>>();
    for (const auto& t : p.at("emotion_transforms")) c.transforms.push_back(transform_from_json(t));
    if (c.transforms.size() != 4) throw Error("profiles.json must list 4 emotion transforms");
    for (std::size_t i = 0; i < 4; ++i) {
      if (static_cast<std::size_t>(c.transforms[i].label) != i) throw Error("profiles.json emotion transforms out of order");
    }
    for (const auto& s : p.at("speakers")) {
      SpeakerProfile sp;
      sp.id = s.at("id").get<std::string>();
      sp.base_log_f0 = s.at("base_log_f0").get<double>();
      sp.rate = s.at("rate").get<double>();
      sp.tilt = s.at("tilt").get<std::array<double, kEnvelopeDim>>();
      sp.seen = s.at("seen").get<bool>();
      sp.has_emotion_data = s.at("has_emotion_data").get<bool>();
      c.speakers.push_back(std::move(sp));
    }
  } catch (const json::exception& e) {
    throw Error("malformed " + (dir / "profiles.json").string() + ": " + e.what());
  }

  const auto read_split = [&](const char* name, std::vector<Utterance>& split) {
    std::istringstream lines(read_text(dir / name));
    std::string line;
    int lineno = 0;
    while (std::getline(lines, line)) {
      ++lineno;
      if (line.empty()) continue;
      try {
        split.push_back(utterance_from_json(fjson::parse(line)));
      } catch (const fjson::exception& e) {
        throw Error((dir / name).string() + ":" + std::to_string(lineno) + ": " + e.what());
      }
    }
  };
  read_split("train.jsonl", c.train);
  read_split("val.jsonl", c.val);
  read_split("test.jsonl", c.test);
  return c;
}

std::vector<const Utterance*> select(std::span<const Utterance> split, std::optional<std::string_view> speaker,
                                     std::optional<Emotion> emotion) {
  std::vector<const Utterance*> out;
  for (const auto& u : split) {
    if (speaker && u.speaker != *speaker) continue;
    if (emotion && u.emotion != *emotion) continue;
    out.push_back(&u);
  }
  return out;
}

}  // namespace emovec
