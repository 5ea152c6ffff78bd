#include <cmath>
#include <fstream>

#include "doctest.h"
#include "emovec/eval_harness.hpp"
#include "emovec/log.hpp"
#include "testing.hpp"

using namespace emovec;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Small corpus, embedder, a random "pretrained" model and per-emotion
// vectors taken against a perturbed copy of it.
struct World {
  Corpus corpus;
  EmbedderModel embedder;
  SpeakerVectorTable table;
  ParameterSet pre;
  std::map<Emotion, EmotionVector> vectors;
};

const World& world() {
  static const World w = [] {
    CorpusConfig cfg;
    cfg.neutral_only_speakers = 3;
    cfg.emotional_speakers = 2;
    cfg.unseen_speakers = 1;
    cfg.utterances_per_style = 40;
    World r{build_corpus(cfg, 5), {}, {}, {}, {}};
    EmbedderHyper h;
    h.steps = 300;
    h.seed = 1;
    r.embedder = train_embedder(r.corpus, h).model;
    r.table = build_speaker_table(r.embedder, r.corpus);
    r.pre = init_params({}, 2);
    r.pre.set_meta("role", "pretrained");
    r.pre.set_meta("scope", "multi");
    Rng rng(3);
    for (Emotion e : {Emotion::angry, Emotion::sad, Emotion::happy}) {
      ParameterSet emo = testing::map_values(r.pre, [&](float v) { return static_cast<float>(v + rng.normal(0, 0.05)); });
      emo.set_meta("scope", "multi");
      r.vectors.emplace(e, extract_vector(emo, r.pre, std::string(to_string(e))));
    }
    return r;
  }();
  return w;
}

ScenarioArtifacts artifacts(const World& w, const SpeakerVectorTable& table, const std::map<Emotion, EmotionVector>& v) {
  return {w.corpus, w.pre, v, w.embedder, table, {}, {{"note", "unit"}}};
}

}  // namespace

TEST_CASE("ordering: strictly increasing scores give the identity") {
  const std::vector<std::vector<double>> scores{{0.1, 0.5, 0.9}, {-1, 0, 1}, {2, 3, 4}};
  const auto c = ordering_confusion(scores, {0.1, 0.5, 0.9});
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t k = 0; k < 3; ++k) CHECK(c.rates[r][k] == (r == k ? 1.0 : 0.0));
  }
  CHECK(c.mean_diagonal == 1.0);
  CHECK(c.monotonic_fraction == 1.0);
  CHECK(c.sentences == 3);
}

TEST_CASE("ordering: constant scores are declared misordered") {
  const auto c = ordering_confusion({{0, 0, 0}, {1, 1, 1}}, {0.1, 0.5, 0.9});
  CHECK(c.mean_diagonal <= 1.0 / 3.0);
  CHECK(c.mean_diagonal == 0.0);
  CHECK(c.monotonic_fraction == 0.0);
}

TEST_CASE("ordering: a tied pair swaps and the rest stays") {
  const auto c = ordering_confusion({{1, 1, 2}}, {0.1, 0.5, 0.9});
  CHECK(c.rates[0][1] == 1.0);
  CHECK(c.rates[1][0] == 1.0);
  CHECK(c.rates[2][2] == 1.0);
  CHECK(c.mean_diagonal == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("ordering: alphas in any order, reversed scores") {
  // alphas listed as 0.9, 0.1, 0.5; scores follow them
  auto c = ordering_confusion({{9, 1, 5}}, {0.9, 0.1, 0.5});
  CHECK(c.mean_diagonal == 1.0);
  c = ordering_confusion({{3, 2, 1}}, {0.1, 0.5, 0.9});
  CHECK(c.rates[0][2] == 1.0);
  CHECK(c.rates[1][1] == 1.0);
  CHECK(c.rates[2][0] == 1.0);
}

TEST_CASE("ordering: needs three distinct alphas") {
  CHECK_THROWS_AS(ordering_confusion({{1, 2}}, {0.1, 0.9}), Error);
  CHECK_THROWS_AS(ordering_confusion({{1, 2, 3}}, {0.1, 0.1, 0.9}), Error);
  CHECK_THROWS_AS(ordering_confusion({{1, 2}}, {0.1, 0.5, 0.9}), Error);
}

TEST_CASE("ordering: confusion rows are stochastic") {
  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::vector<double>> scores;
    for (int i = 0; i < 17; ++i) {
      // coarse values so ties happen
      scores.push_back({static_cast<double>(rng.below(3)), static_cast<double>(rng.below(3)),
                        static_cast<double>(rng.below(3))});
    }
    const auto c = ordering_confusion(scores, {0.1, 0.5, 0.9});
    for (const auto& row : c.rates) CHECK(std::fabs(row[0] + row[1] + row[2] - 1.0) <= 1e-9);
  }
}

TEST_CASE("intensity estimator") {
  const auto& w = world();
  const auto est = IntensityEstimator::from_corpus(w.corpus);
  for (const auto& [e, g] : est.directions) {
    double n = 0;
    for (double v : g) n += v * v;
    CHECK(std::sqrt(n) == doctest::Approx(1.0).epsilon(1e-12));
  }
  // angry raises F0 and energy and shortens durations
  const auto& g = est.direction(Emotion::angry);
  CHECK(g[feature_index::log_f0] > 0);
  CHECK(g[feature_index::log_energy] > 0);
  CHECK(g[feature_index::log_duration] < 0);
  CHECK_THROWS_AS(est.direction(Emotion::neutral), Error);

  // projection of the noise-free rendering grows linearly with intensity
  const auto& spk = w.corpus.speakers.front();
  const std::vector<int> tokens{1, 4, 9, 16, 25};
  const auto& tr = w.corpus.transform(Emotion::sad);
  const auto base = render_features(w.corpus.tokens, tokens, spk, tr, 0.0);
  const double s1 = est.score(Emotion::sad, render_features(w.corpus.tokens, tokens, spk, tr, 1.0), base);
  const double s5 = est.score(Emotion::sad, render_features(w.corpus.tokens, tokens, spk, tr, 0.5), base);
  CHECK(s1 > 0);
  CHECK(s5 == doctest::Approx(0.5 * s1).epsilon(1e-9));
  CHECK_THROWS_AS(est.score(Emotion::sad, base, Frames(2)), Error);
}

TEST_CASE("secs summary") {
  auto s = summarize_secs({1.0, 1.0, 1.0});
  CHECK(s.mean == 1.0);
  CHECK(s.half_width == 0.0);
  s = summarize_secs({0.0, 1.0});
  CHECK(s.mean == 0.5);
  CHECK(s.half_width == doctest::Approx(1.96 * std::sqrt(0.5) / std::sqrt(2.0)));
}

TEST_CASE("secs_eval") {
  const auto& w = world();
  std::vector<Frames> a;
  for (const auto* u : select(w.corpus.test, "s00", Emotion::neutral)) a.push_back(u->features);
  auto s = secs_eval(a, a, w.embedder);
  CHECK(s.mean == 1.0);
  CHECK(s.half_width == 0.0);
  CHECK(s.per_sentence.size() == a.size());

  auto b = a;
  for (auto& f : b)
    for (auto& fr : f) fr[feature_index::log_f0] += 1.0;
  CHECK(secs_eval(a, b, w.embedder).mean < 1.0);

  auto shorter = a;
  shorter.pop_back();
  CHECK_THROWS_AS(secs_eval(a, shorter, w.embedder), Error);
}

TEST_CASE("default targets per case") {
  const auto& c = world().corpus;
  CHECK(default_targets(ScenarioCase::same_spk, c) == std::vector<std::string>{"e00", "e01"});
  CHECK(default_targets(ScenarioCase::cross_seen, c) == std::vector<std::string>{"s00", "s01", "s02"});
  CHECK(default_targets(ScenarioCase::cross_unseen, c) == std::vector<std::string>{"u00"});
  CHECK(default_targets(ScenarioCase::cross_seen, c, 2).size() == 2);
}

TEST_CASE("vector source strings") {
  CHECK(VectorSource::parse("speaker_agnostic").scope == VectorScope::speaker_agnostic);
  const auto s = VectorSource::parse("single_speaker:e00");
  CHECK(s.scope == VectorScope::single_speaker);
  CHECK(s.speaker == "e00");
  CHECK(s.describe() == "single_speaker:e00");
  CHECK_THROWS_AS(VectorSource::parse("single_speaker:"), Error);
  CHECK_THROWS_AS(parse_scenario_case("cross"), Error);
}

TEST_CASE("alpha 0 reproduces the neutral synthesis exactly") {
  const auto& w = world();
  ScenarioSpec spec;
  spec.name = "zero";
  spec.scenario_case = ScenarioCase::cross_seen;
  spec.alphas = {0.0};
  const auto r = run_scenario(spec, artifacts(w, w.table, w.vectors));
  REQUIRE(r.emotions.size() == 3);
  for (const auto& e : r.emotions) {
    CHECK(e.secs.mean == 1.0);
    CHECK(e.secs.half_width == 0.0);
    for (double v : e.secs.per_sentence) CHECK(v == 1.0);
    CHECK_FALSE(e.confusion.has_value());
  }
  CHECK(r.secs_alpha == 0.0);
}

TEST_CASE("scenario report contents") {
  const auto& w = world();
  ScenarioSpec spec;
  spec.name = "cs";
  spec.scenario_case = ScenarioCase::cross_seen;
  spec.sentences_per_target = 4;
  const auto r = run_scenario(spec, artifacts(w, w.table, w.vectors));
  CHECK(r.targets == std::vector<std::string>{"s00", "s01", "s02"});
  CHECK(r.secs_alpha == 0.9);
  CHECK(r.run_meta.at("note") == "unit");
  CHECK(r.run_meta.at("pretrained_hash") == content_hash(w.pre));
  std::size_t sentences = 0;
  for (const auto& t : r.targets) {
    sentences += std::min<std::size_t>(4, select(w.corpus.test, t, Emotion::neutral).size());
  }
  REQUIRE(sentences > 0);
  for (const auto& e : r.emotions) {
    CHECK(e.targets.size() == 3);
    CHECK(e.secs.per_sentence.size() == sentences);
    REQUIRE(e.confusion.has_value());
    for (const auto& row : e.confusion->rates) CHECK(std::fabs(row[0] + row[1] + row[2] - 1.0) <= 1e-9);
    CHECK(e.vector_hash == w.vectors.at(e.emotion).hash());
    for (const auto& t : e.targets) CHECK(t.margin == doctest::Approx(t.own_secs - t.cross_secs));
  }
  // deterministic
  CHECK(run_scenario(spec, artifacts(w, w.table, w.vectors)) == r);

  spec.secs_alpha = 0.7;  // not listed: falls back to the largest alpha
  CHECK(run_scenario(spec, artifacts(w, w.table, w.vectors)).secs_alpha == 0.9);
}

TEST_CASE("scenario contract checks") {
  const auto& w = world();
  ScenarioSpec spec;
  spec.name = "bad";

  spec.scenario_case = ScenarioCase::cross_unseen;
  spec.targets = {"s00"};
  CHECK_THROWS_AS(run_scenario(spec, artifacts(w, w.table, w.vectors)), Error);

  spec.scenario_case = ScenarioCase::same_spk;
  spec.targets = {"s00"};
  CHECK_THROWS_AS(run_scenario(spec, artifacts(w, w.table, w.vectors)), Error);

  // unseen target conditioned on a vector from training data
  spec.scenario_case = ScenarioCase::cross_unseen;
  spec.targets = {"u00"};
  auto leaky = w.table;
  leaky.at("u00").source = "train";
  CHECK_THROWS_AS(run_scenario(spec, artifacts(w, leaky, w.vectors)), Error);
  CHECK_NOTHROW(run_scenario(spec, artifacts(w, w.table, w.vectors)));

  // scope must match the declared source
  spec.source = VectorSource::parse("single_speaker:e00");
  CHECK_THROWS_AS(run_scenario(spec, artifacts(w, w.table, w.vectors)), Error);

  spec.source = {};
  spec.targets = {"nobody"};
  CHECK_THROWS_AS(run_scenario(spec, artifacts(w, w.table, w.vectors)), Error);
}

TEST_CASE("report serialization") {
  const auto& w = world();
  ScenarioSpec spec;
  spec.name = "ser";
  spec.scenario_case = ScenarioCase::cross_unseen;
  spec.sentences_per_target = 3;
  const auto r = run_scenario(spec, artifacts(w, w.table, w.vectors));

  CHECK(report_from_json(report_to_json(r)) == r);
  CHECK_THROWS_AS(report_from_json("{"), Error);
  CHECK_THROWS_AS(report_from_json("{}"), Error);

  testing::TempDir d1("rep_a"), d2("rep_b");
  write_report(r, d1.path());
  write_report(r, d2.path());
  CHECK(slurp(d1.path() / "report.json") == slurp(d2.path() / "report.json"));
  CHECK(slurp(d1.path() / "report.md") == slurp(d2.path() / "report.md"));
  CHECK(report_from_json(slurp(d1.path() / "report.json")) == r);

  const auto md = report_to_markdown(r);
  for (const auto* name : {"| angry | ", "| sad | ", "| happy | "}) CHECK(md.find(name) != std::string::npos);
  CHECK(md.find(" ± ") != std::string::npos);
  CHECK(md.find("| true \\ perceived | weak | medium | strong |") != std::string::npos);
}
