#include "emovec/eval_harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "emovec/error.hpp"
#include "emovec/parallel.hpp"
#include "json.hpp"

namespace emovec {
namespace {

using json = nlohmann::json;

std::string fixed(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

bool has_alpha(const std::vector<double>& alphas, double a) {
  return std::find(alphas.begin(), alphas.end(), a) != alphas.end();
}

double pick_secs_alpha(const ScenarioSpec& spec) {
  if (has_alpha(spec.alphas, spec.secs_alpha)) return spec.secs_alpha;
  return *std::max_element(spec.alphas.begin(), spec.alphas.end());
}

std::vector<Frames> synthesize(const DenseParams& w, const std::vector<std::vector<int>>& sentences,
                               const SpeakerEmbedding& speaker) {
  std::vector<Frames> out;
  out.reserve(sentences.size());
  for (const auto& tokens : sentences) out.push_back(forward(w, tokens, speaker.values));
  return out;
}

std::vector<SpeakerEmbedding> embed_all(const EmbedderModel& embedder, const std::vector<Frames>& outputs) {
  std::vector<SpeakerEmbedding> out;
  out.reserve(outputs.size());
  for (const auto& f : outputs) out.push_back(embed_utterance(embedder, f));
  return out;
}

// Ranks for one sentence: perceived[k] is the slot assigned to true slot k.
std::array<std::size_t, 3> perceived_slots(const std::array<double, 3>& score) {
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score[a] < score[b]; });
  std::array<std::size_t, 3> perceived{};
  for (std::size_t i = 0; i < 3;) {
    std::size_t j = i + 1;
    while (j < 3 && score[order[j]] == score[order[i]]) ++j;
    const std::size_t group = j - i;
    // Rotate ranks inside a tied group so none of its members lands on its
    // own slot by luck.
    for (std::size_t k = i; k < j; ++k) {
      const std::size_t rank = group == 1 ? k : i + (k - i + 1) % group;
      perceived[order[k]] = rank;
    }
    i = j;
  }
  return perceived;
}

json secs_to_json(const SecsSummary& s) {
  return {{"per_sentence", s.per_sentence}, {"mean", s.mean}, {"half_width", s.half_width}};
}

SecsSummary secs_from_json(const json& j) {
  SecsSummary s;
  s.per_sentence = j.at("per_sentence").get<std::vector<double>>();
  s.mean = j.at("mean").get<double>();
  s.half_width = j.at("half_width").get<double>();
  return s;
}

json stats_to_json(const TensorStats& t) {
  return {{"name", t.name},
          {"count", t.count},
          {"l2", t.l2},
          {"max_abs", t.max_abs},
          {"near_zero_fraction", t.near_zero_fraction}};
}

TensorStats stats_from_json(const json& j) {
  TensorStats t;
  t.name = j.at("name").get<std::string>();
  t.count = j.at("count").get<std::size_t>();
  t.l2 = j.at("l2").get<double>();
  t.max_abs = j.at("max_abs").get<double>();
  t.near_zero_fraction = j.at("near_zero_fraction").get<double>();
  return t;
}

json confusion_to_json(const ConfusionMatrix& c) {
  json rows = json::array();
  for (const auto& r : c.rates) rows.push_back(r);
  return {{"rates", rows},
          {"mean_diagonal", c.mean_diagonal},
          {"monotonic_fraction", c.monotonic_fraction},
          {"sentences", c.sentences}};
}

ConfusionMatrix confusion_from_json(const json& j) {
  ConfusionMatrix c;
  const auto& rows = j.at("rates");
  if (rows.size() != 3) throw Error("report: confusion matrix must have 3 rows");
  for (std::size_t r = 0; r < 3; ++r) c.rates[r] = rows[r].get<std::array<double, 3>>();
  c.mean_diagonal = j.at("mean_diagonal").get<double>();
  c.monotonic_fraction = j.at("monotonic_fraction").get<double>();
  c.sentences = j.at("sentences").get<std::size_t>();
  return c;
}

}  // namespace

std::string_view to_string(ScenarioCase c) {
  switch (c) {
    case ScenarioCase::same_spk: return "same_spk";
    case ScenarioCase::cross_seen: return "cross_seen";
    case ScenarioCase::cross_unseen: return "cross_unseen";
  }
  return "?";
}

ScenarioCase parse_scenario_case(std::string_view s) {
  if (s == "same_spk") return ScenarioCase::same_spk;
  if (s == "cross_seen") return ScenarioCase::cross_seen;
  if (s == "cross_unseen") return ScenarioCase::cross_unseen;
  throw Error("unknown scenario case '" + std::string(s) + "' (expected same_spk, cross_seen or cross_unseen)");
}

std::string VectorSource::describe() const {
  if (scope == VectorScope::speaker_agnostic) return "speaker_agnostic";
  return "single_speaker:" + speaker;
}

VectorSource VectorSource::parse(std::string_view s) {
  if (s == "speaker_agnostic") return {};
  constexpr std::string_view prefix = "single_speaker:";
  if (s.substr(0, prefix.size()) == prefix && s.size() > prefix.size()) {
    return {VectorScope::single_speaker, std::string(s.substr(prefix.size()))};
  }
  throw Error("vector source must be 'speaker_agnostic' or 'single_speaker:<id>', got '" + std::string(s) + "'");
}

std::vector<std::string> default_targets(ScenarioCase c, const Corpus& corpus, std::size_t max_targets) {
  std::vector<std::string> out;
  for (const auto& spk : corpus.speakers) {
    if (out.size() >= max_targets) break;
    bool ok = false;
    switch (c) {
      case ScenarioCase::same_spk: ok = spk.seen && spk.has_emotion_data; break;
      case ScenarioCase::cross_seen: ok = spk.seen && !spk.has_emotion_data; break;
      case ScenarioCase::cross_unseen: ok = !spk.seen; break;
    }
    if (ok) out.push_back(spk.id);
  }
  return out;
}

void validate_scenario(const ScenarioSpec& spec, const Corpus& corpus) {
  if (spec.alphas.empty()) throw Error("scenario '" + spec.name + "': alphas must not be empty");
  for (double a : spec.alphas) {
    if (!std::isfinite(a)) throw Error("scenario '" + spec.name + "': alphas must be finite");
  }
  if (spec.emotions.empty()) throw Error("scenario '" + spec.name + "': emotions must not be empty");
  if (spec.sentences_per_target <= 0) throw Error("scenario '" + spec.name + "': sentences_per_target must be positive");
  for (const auto& id : spec.targets) {
    const auto* spk = corpus.find_speaker(id);
    if (!spk) throw Error("scenario '" + spec.name + "': unknown target speaker '" + id + "'");
    if (spec.scenario_case == ScenarioCase::cross_unseen && spk->seen) {
      throw Error("scenario '" + spec.name + "': cross_unseen target '" + id + "' is a seen speaker");
    }
    if (spec.scenario_case == ScenarioCase::same_spk && !spk->has_emotion_data) {
      throw Error("scenario '" + spec.name + "': same_spk target '" + id + "' has no emotional data");
    }
  }
}

IntensityEstimator IntensityEstimator::from_corpus(const Corpus& corpus) {
  IntensityEstimator est;
  const EmotionTransform& none = corpus.transform(Emotion::neutral);
  std::vector<int> all_tokens(kVocabSize);
  std::iota(all_tokens.begin(), all_tokens.end(), 0);
  for (Emotion e : {Emotion::angry, Emotion::sad, Emotion::happy}) {
    Frame sum{};
    std::size_t n = 0;
    for (const auto& spk : corpus.speakers) {
      const Frames strong = render_features(corpus.tokens, all_tokens, spk, corpus.transform(e), 1.0);
      const Frames base = render_features(corpus.tokens, all_tokens, spk, none, 0.0);
      for (std::size_t t = 0; t < strong.size(); ++t) {
        for (std::size_t d = 0; d < kFeatureDim; ++d) sum[d] += strong[t][d] - base[t][d];
      }
      n += strong.size();
    }
    double norm2 = 0.0;
    for (auto& v : sum) {
      v /= static_cast<double>(n);
      norm2 += v * v;
    }
    if (!(norm2 > 0.0)) continue;  // transform without effect has no direction
    const double norm = std::sqrt(norm2);
    for (auto& v : sum) v /= norm;
    est.directions.emplace(e, sum);
  }
  return est;
}

const Frame& IntensityEstimator::direction(Emotion e) const {
  auto it = directions.find(e);
  if (it == directions.end()) throw Error("intensity estimator has no direction for '" + std::string(to_string(e)) + "'");
  return it->second;
}

double IntensityEstimator::score(Emotion e, const Frames& frames, const Frames& neutral) const {
  if (frames.size() != neutral.size()) throw Error("intensity score: frame count mismatch with neutral synthesis");
  if (frames.empty()) throw Error("intensity score: empty sentence");
  const Frame& g = direction(e);
  double total = 0.0;
  for (std::size_t t = 0; t < frames.size(); ++t) {
    for (std::size_t d = 0; d < kFeatureDim; ++d) total += g[d] * (frames[t][d] - neutral[t][d]);
  }
  return total / static_cast<double>(frames.size());
}

SecsSummary summarize_secs(std::vector<double> per_sentence) {
  SecsSummary s;
  s.per_sentence = std::move(per_sentence);
  const std::size_t n = s.per_sentence.size();
  if (n == 0) return s;
  s.mean = mean_of(s.per_sentence);
  if (n > 1) {
    double ss = 0.0;
    for (double v : s.per_sentence) ss += (v - s.mean) * (v - s.mean);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    s.half_width = 1.96 * sd / std::sqrt(static_cast<double>(n));
  }
  return s;
}

SecsSummary secs_eval(const std::vector<Frames>& emotional, const std::vector<Frames>& neutral,
                      const EmbedderModel& embedder) {
  if (emotional.size() != neutral.size()) {
    throw Error("secs_eval: " + std::to_string(emotional.size()) + " emotional vs " + std::to_string(neutral.size()) +
                " neutral sentences");
  }
  std::vector<double> per;
  per.reserve(emotional.size());
  for (std::size_t i = 0; i < emotional.size(); ++i) {
    if (emotional[i].size() != neutral[i].size()) {
      throw Error("secs_eval: sentence " + std::to_string(i) + " differs in length between the two sets");
    }
    per.push_back(secs(embed_utterance(embedder, emotional[i]), embed_utterance(embedder, neutral[i])));
  }
  return summarize_secs(std::move(per));
}

ConfusionMatrix ordering_confusion(const std::vector<std::vector<double>>& scores, const std::vector<double>& alphas) {
  if (alphas.size() != 3 || std::set<double>(alphas.begin(), alphas.end()).size() != 3) {
    throw Error("intensity ordering needs exactly 3 distinct alpha values");
  }
  // True slot of alphas[k]: its rank among the alphas.
  std::array<std::size_t, 3> slot_of{};
  for (std::size_t k = 0; k < 3; ++k) {
    slot_of[k] = static_cast<std::size_t>(std::count_if(alphas.begin(), alphas.end(), [&](double a) { return a < alphas[k]; }));
  }
  ConfusionMatrix c;
  std::array<std::array<double, 3>, 3> counts{};
  std::size_t monotonic = 0;
  for (const auto& row : scores) {
    if (row.size() != 3) throw Error("intensity ordering: every sentence needs one score per alpha");
    std::array<double, 3> by_slot{};
    for (std::size_t k = 0; k < 3; ++k) by_slot[slot_of[k]] = row[k];
    const auto perceived = perceived_slots(by_slot);
    for (std::size_t s = 0; s < 3; ++s) counts[s][perceived[s]] += 1.0;
    if (by_slot[0] < by_slot[1] && by_slot[1] < by_slot[2]) ++monotonic;
  }
  c.sentences = scores.size();
  if (c.sentences == 0) return c;
  const double n = static_cast<double>(c.sentences);
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t k = 0; k < 3; ++k) c.rates[r][k] = counts[r][k] / n;
  }
  c.mean_diagonal = (c.rates[0][0] + c.rates[1][1] + c.rates[2][2]) / 3.0;
  c.monotonic_fraction = static_cast<double>(monotonic) / n;
  return c;
}

ConfusionMatrix intensity_ordering_eval(const std::vector<std::vector<Frames>>& synth, const std::vector<double>& alphas,
                                        Emotion emotion, const IntensityEstimator& estimator,
                                        const std::vector<Frames>& neutral) {
  if (synth.size() != alphas.size()) throw Error("intensity ordering: one synthesis set per alpha is required");
  std::vector<std::vector<double>> scores(neutral.size(), std::vector<double>(alphas.size()));
  for (std::size_t k = 0; k < synth.size(); ++k) {
    if (synth[k].size() != neutral.size()) {
      throw Error("intensity ordering: sentence count differs between alpha " + format_double(alphas[k]) + " and neutral");
    }
    for (std::size_t i = 0; i < neutral.size(); ++i) scores[i][k] = estimator.score(emotion, synth[k][i], neutral[i]);
  }
  return ordering_confusion(scores, alphas);
}

ScenarioReport run_scenario(const ScenarioSpec& spec_in, const ScenarioArtifacts& art) {
  ScenarioSpec spec = spec_in;
  if (spec.targets.empty()) spec.targets = default_targets(spec.scenario_case, art.corpus);
  if (spec.targets.empty()) throw Error("scenario '" + spec.name + "': the corpus has no eligible target speakers");
  validate_scenario(spec, art.corpus);

  for (const auto& id : spec.targets) {
    auto it = art.speaker_vectors.find(id);
    if (it == art.speaker_vectors.end()) throw Error("scenario '" + spec.name + "': no speaker vector for '" + id + "'");
    if (spec.scenario_case == ScenarioCase::cross_unseen && it->second.source == "train") {
      throw Error("scenario '" + spec.name + "': unseen target '" + id +
                  "' is conditioned on a vector derived from training data");
    }
  }
  for (Emotion e : spec.emotions) {
    auto it = art.vectors.find(e);
    if (it == art.vectors.end()) {
      throw Error("scenario '" + spec.name + "': no emotion vector for '" + std::string(to_string(e)) + "'");
    }
    if (it->second.scope() != spec.source.scope) {
      throw Error("scenario '" + spec.name + "': vector for '" + std::string(to_string(e)) + "' is " +
                  std::string(to_string(it->second.scope())) + " but the scenario expects " + spec.source.describe());
    }
    require_compatible(art.pretrained, it->second.params(), "run_scenario(pretrained, vector)");
  }

  const double secs_alpha = pick_secs_alpha(spec);
  const bool ordering = spec.alphas.size() == 3 && std::set<double>(spec.alphas.begin(), spec.alphas.end()).size() == 3;
  const auto estimator = IntensityEstimator::from_corpus(art.corpus);
  const DenseParams pre = DenseParams::from_params(art.pretrained, art.model);

  // Test sentences per target: token sequences of its neutral test utterances.
  std::vector<std::vector<std::vector<int>>> sentences(spec.targets.size());
  for (std::size_t t = 0; t < spec.targets.size(); ++t) {
    for (const auto* u : select(art.corpus.test, spec.targets[t], Emotion::neutral)) {
      if (sentences[t].size() >= static_cast<std::size_t>(spec.sentences_per_target)) break;
      sentences[t].push_back(u->tokens);
    }
    if (sentences[t].empty()) throw Error("scenario '" + spec.name + "': target '" + spec.targets[t] + "' has no test sentences");
  }

  ScenarioReport report;
  report.name = spec.name;
  report.scenario_case = spec.scenario_case;
  report.vector_source = spec.source.describe();
  report.alphas = spec.alphas;
  report.secs_alpha = secs_alpha;
  report.targets = spec.targets;
  report.run_meta = art.run_meta;
  report.run_meta["pretrained_hash"] = content_hash(art.pretrained);
  report.run_meta["embedder_hash"] = content_hash(art.embedder.to_params());

  for (Emotion e : spec.emotions) {
    const EmotionVector& tau = art.vectors.at(e);
    std::vector<DenseParams> edited;
    edited.reserve(spec.alphas.size());
    for (double a : spec.alphas) edited.push_back(DenseParams::from_params(apply_vector(art.pretrained, tau, a), art.model));
    const std::size_t secs_k = static_cast<std::size_t>(
        std::find(spec.alphas.begin(), spec.alphas.end(), secs_alpha) - spec.alphas.begin());

    struct Cell {
      TargetResult result;
      std::vector<double> own;
      std::vector<std::vector<double>> scores;
    };
    std::vector<Cell> cells(spec.targets.size());
    parallel_for(spec.targets.size(), [&](std::size_t t) {
      const std::string& id = spec.targets[t];
      const auto& own_vec = art.speaker_vectors.at(id).embedding;
      const auto neutral = synthesize(pre, sentences[t], own_vec);
      std::vector<std::vector<Frames>> synth;
      for (const auto& w : edited) synth.push_back(synthesize(w, sentences[t], own_vec));

      const auto emo_emb = embed_all(art.embedder, synth[secs_k]);
      const auto own_emb = embed_all(art.embedder, neutral);
      Cell& cell = cells[t];
      for (std::size_t i = 0; i < emo_emb.size(); ++i) cell.own.push_back(secs(emo_emb[i], own_emb[i]));

      std::vector<double> cross;
      for (const auto& [other, entry] : art.speaker_vectors) {
        if (other == id || !art.corpus.find_speaker(other)) continue;
        const auto other_emb = embed_all(art.embedder, synthesize(pre, sentences[t], entry.embedding));
        for (std::size_t i = 0; i < emo_emb.size(); ++i) cross.push_back(secs(emo_emb[i], other_emb[i]));
      }
      cell.result.speaker = id;
      cell.result.own_secs = mean_of(cell.own);
      cell.result.cross_secs = mean_of(cross);
      cell.result.margin = cell.result.own_secs - cell.result.cross_secs;
      if (ordering) {
        for (std::size_t i = 0; i < neutral.size(); ++i) {
          std::vector<double> row;
          for (std::size_t k = 0; k < synth.size(); ++k) row.push_back(estimator.score(e, synth[k][i], neutral[i]));
          cell.scores.push_back(std::move(row));
        }
        cell.result.monotonic_fraction = ordering_confusion(cell.scores, spec.alphas).monotonic_fraction;
      }
    });

    EmotionResult er;
    er.emotion = e;
    std::vector<double> own_all;
    std::vector<std::vector<double>> scores_all;
    std::vector<double> margins;
    for (auto& cell : cells) {
      own_all.insert(own_all.end(), cell.own.begin(), cell.own.end());
      scores_all.insert(scores_all.end(), cell.scores.begin(), cell.scores.end());
      margins.push_back(cell.result.margin);
      er.targets.push_back(std::move(cell.result));
    }
    er.secs = summarize_secs(std::move(own_all));
    er.mean_margin = mean_of(margins);
    if (ordering) er.confusion = ordering_confusion(scores_all, spec.alphas);
    er.vector_stats = vector_stats(tau).global;
    er.vector_hash = tau.hash();
    report.emotions.push_back(std::move(er));
  }
  return report;
}

std::string report_to_json(const ScenarioReport& r) {
  json emotions = json::array();
  for (const auto& e : r.emotions) {
    json targets = json::array();
    for (const auto& t : e.targets) {
      targets.push_back({{"speaker", t.speaker},
                         {"own_secs", t.own_secs},
                         {"cross_secs", t.cross_secs},
                         {"margin", t.margin},
                         {"monotonic_fraction", t.monotonic_fraction}});
    }
    json item = {{"emotion", to_string(e.emotion)},
                 {"secs", secs_to_json(e.secs)},
                 {"targets", targets},
                 {"mean_margin", e.mean_margin},
                 {"vector_stats", stats_to_json(e.vector_stats)},
                 {"vector_hash", e.vector_hash}};
    item["confusion"] = e.confusion ? confusion_to_json(*e.confusion) : json(nullptr);
    emotions.push_back(std::move(item));
  }
  json j = {{"schema_version", r.schema_version},
            {"name", r.name},
            {"case", to_string(r.scenario_case)},
            {"vector_source", r.vector_source},
            {"alphas", r.alphas},
            {"secs_alpha", r.secs_alpha},
            {"targets", r.targets},
            {"emotions", emotions},
            {"run_meta", r.run_meta}};
  return j.dump(2) + "\n";
}

ScenarioReport report_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(std::string("report: invalid JSON: ") + e.what());
  }
  try {
    ScenarioReport r;
    r.schema_version = j.at("schema_version").get<int>();
    if (r.schema_version != 1) throw Error("report: unsupported schema_version " + std::to_string(r.schema_version));
    r.name = j.at("name").get<std::string>();
    r.scenario_case = parse_scenario_case(j.at("case").get<std::string>());
    r.vector_source = j.at("vector_source").get<std::string>();
    r.alphas = j.at("alphas").get<std::vector<double>>();
    r.secs_alpha = j.at("secs_alpha").get<double>();
    r.targets = j.at("targets").get<std::vector<std::string>>();
    for (const auto& item : j.at("emotions")) {
      EmotionResult e;
      e.emotion = parse_emotion(item.at("emotion").get<std::string>());
      e.secs = secs_from_json(item.at("secs"));
      for (const auto& t : item.at("targets")) {
        e.targets.push_back({t.at("speaker").get<std::string>(), t.at("own_secs").get<double>(),
                             t.at("cross_secs").get<double>(), t.at("margin").get<double>(),
                             t.at("monotonic_fraction").get<double>()});
      }
      e.mean_margin = item.at("mean_margin").get<double>();
      if (!item.at("confusion").is_null()) e.confusion = confusion_from_json(item.at("confusion"));
      e.vector_stats = stats_from_json(item.at("vector_stats"));
      e.vector_hash = item.at("vector_hash").get<std::string>();
      r.emotions.push_back(std::move(e));
    }
    r.run_meta = j.at("run_meta").get<MetaMap>();
    return r;
  } catch (const json::exception& e) {
    throw Error(std::string("report: ") + e.what());
  }
}

std::string report_to_markdown(const ScenarioReport& r) {
  std::ostringstream md;
  md << "# " << r.name << "\n\n";
  md << "case: " << to_string(r.scenario_case) << ", vector: " << r.vector_source << ", alphas:";
  for (double a : r.alphas) md << ' ' << format_double(a);
  md << ", SECS at alpha " << format_double(r.secs_alpha) << "\n\n";

  md << "| emotion | SECS (own neutral) | mean margin | ordering accuracy | monotonic |\n";
  md << "|---|---|---|---|---|\n";
  for (const auto& e : r.emotions) {
    md << "| " << to_string(e.emotion) << " | " << fixed(e.secs.mean) << " ± " << fixed(e.secs.half_width) << " | "
       << fixed(e.mean_margin) << " | " << (e.confusion ? fixed(e.confusion->mean_diagonal) : "-") << " | "
       << (e.confusion ? fixed(e.confusion->monotonic_fraction) : "-") << " |\n";
  }

  md << "\n## Targets\n\n| emotion | speaker | own | cross | margin | monotonic |\n|---|---|---|---|---|---|\n";
  for (const auto& e : r.emotions) {
    for (const auto& t : e.targets) {
      md << "| " << to_string(e.emotion) << " | " << t.speaker << " | " << fixed(t.own_secs) << " | "
         << fixed(t.cross_secs) << " | " << fixed(t.margin) << " | " << fixed(t.monotonic_fraction) << " |\n";
    }
  }

  for (const auto& e : r.emotions) {
    if (!e.confusion) continue;
    md << "\n## Intensity confusion: " << to_string(e.emotion) << "\n\n";
    md << "| true \\ perceived | weak | medium | strong |\n|---|---|---|---|\n";
    for (std::size_t row = 0; row < 3; ++row) {
      md << "| " << kIntensityLevels[row];
      for (double v : e.confusion->rates[row]) md << " | " << fixed(v);
      md << " |\n";
    }
  }

  md << "\n## Vectors\n\n| emotion | l2 | max abs | near-zero | hash |\n|---|---|---|---|---|\n";
  for (const auto& e : r.emotions) {
    md << "| " << to_string(e.emotion) << " | " << fixed(e.vector_stats.l2, 6) << " | " << fixed(e.vector_stats.max_abs, 6)
       << " | " << fixed(e.vector_stats.near_zero_fraction) << " | " << e.vector_hash.substr(0, 16) << " |\n";
  }
  return md.str();
}

void write_report(const ScenarioReport& report, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::io, "cannot create report directory " + dir.string() + ": " + ec.message());
  const std::pair<const char*, std::string> files[] = {{"report.json", report_to_json(report)},
                                                        {"report.md", report_to_markdown(report)}};
  for (const auto& [name, text] : files) {
    const auto path = dir / name;
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
  }
}

}  // namespace emovec
