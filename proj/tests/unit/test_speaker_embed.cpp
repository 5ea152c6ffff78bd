#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "emovec/speaker_embed.hpp"
#include "testing.hpp"

using namespace emovec;

namespace {

struct Trained {
  Corpus corpus;
  EmbedderTraining training;
};

// The default corpus and embedder, built once.
const Trained& trained() {
  static const Trained t = [] {
    Trained r{build_corpus({}, 1234), {}};
    EmbedderHyper h;
    h.seed = 11;
    r.training = train_embedder(r.corpus, h);
    return r;
  }();
  return t;
}

double norm(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("pool_stats is mean then population std") {
  Frames f(2);
  for (std::size_t d = 0; d < kFeatureDim; ++d) {
    f[0][d] = 1.0;
    f[1][d] = 3.0;
  }
  const auto p = pool_stats(f);
  for (std::size_t d = 0; d < kFeatureDim; ++d) {
    CHECK(p[d] == 2.0);
    CHECK(p[kFeatureDim + d] == 1.0);
  }
  CHECK_THROWS_AS(pool_stats(Frames{}), Error);
}

TEST_CASE("secs properties") {
  const SpeakerEmbedding a{{1.0, 2.0, -0.5}, false};
  const SpeakerEmbedding b{{0.3, -1.0, 4.0}, false};
  CHECK(secs(a, a) == 1.0);
  CHECK(secs(a, b) == secs(b, a));
  const SpeakerEmbedding a3{{3.0, 6.0, -1.5}, false};
  CHECK(secs(a3, b) == doctest::Approx(secs(a, b)).epsilon(1e-15));
  CHECK(secs(SpeakerEmbedding{{1, 0}, true}, SpeakerEmbedding{{0, 1}, true}) == 0.0);
  CHECK(secs(SpeakerEmbedding{{1, 0}, true}, SpeakerEmbedding{{-1, 0}, true}) == -1.0);
  CHECK_THROWS_AS(secs(SpeakerEmbedding{{0, 0}, false}, a), Error);
  CHECK_THROWS_AS(secs(SpeakerEmbedding{{1, 0}, false}, a), Error);
}

TEST_CASE("embedder accuracy on the default corpus") {
  const auto& t = trained();
  CHECK(t.training.heldout_accuracy >= 0.95);
  CHECK(t.training.model.num_speakers() == 12);
}

TEST_CASE("untrained embedder is at chance level") {
  const auto& c = trained().corpus;
  EmbedderHyper h;
  h.steps = 0;
  const auto untrained = train_embedder(c, h);
  CHECK(untrained.heldout_accuracy == doctest::Approx(1.0 / 12.0).epsilon(0.05));
}

TEST_CASE("embedder training is deterministic") {
  CorpusConfig cfg;
  cfg.neutral_only_speakers = 3;
  cfg.emotional_speakers = 0;
  cfg.unseen_speakers = 0;
  cfg.utterances_per_style = 40;
  const auto c = build_corpus(cfg, 3);
  EmbedderHyper h;
  h.steps = 100;
  h.seed = 4;
  CHECK(train_embedder(c, h).model == train_embedder(c, h).model);
  const auto p = train_embedder(c, h).model.to_params();
  CHECK(p.meta_value("role") == "embedder");
  CHECK(EmbedderModel::from_params(p) == train_embedder(c, h).model);


  // one speaker left: nothing to discriminate
  Corpus one = c;
  auto other = [](const Utterance& u) { return u.speaker != "s00"; };
  std::erase_if(one.train, other);
  std::erase_if(one.val, other);
  std::erase_if(one.test, other);
  std::erase_if(one.speakers, [](const SpeakerProfile& s) { return s.id != "s00"; });
  CHECK_THROWS_AS(train_embedder(one, h), Error);
}

TEST_CASE("utterance embeddings") {
  const auto& m = trained().training.model;
  const auto& c = trained().corpus;
  const auto& u = c.test.front();

  const auto e = embed_utterance(m, u.features);
  CHECK(e.values.size() == kEmbeddingDim);
  CHECK(e.normalized);
  CHECK(norm(e.values) == doctest::Approx(1.0).epsilon(1e-12));

  Frames doubled = u.features;
  doubled.insert(doubled.end(), u.features.begin(), u.features.end());
  const auto e2 = embed_utterance(m, doubled);
  for (std::size_t k = 0; k < kEmbeddingDim; ++k) CHECK(e2.values[k] == doctest::Approx(e.values[k]).epsilon(1e-12));

  const Frames constant(5, u.features.front());
  const auto ec = embed_utterance(m, constant);
  CHECK(norm(ec.values) == doctest::Approx(1.0).epsilon(1e-12));

  CHECK_THROWS_AS(embed_utterance(m, Frames{}), Error);
}

TEST_CASE("speaker vectors are averaged, normalized and order-free") {
  const auto& m = trained().training.model;
  const auto& c = trained().corpus;
  std::vector<Frames> utts;
  for (const auto* u : select(c.train, "s01", Emotion::neutral)) {
    if (utts.size() == 6) break;
    utts.push_back(u->features);
  }
  const auto v = speaker_vector(m, utts);
  CHECK(norm(v.values) == doctest::Approx(1.0).epsilon(1e-12));

  auto shuffled = utts;
  std::reverse(shuffled.begin(), shuffled.end());
  std::swap(shuffled[1], shuffled[3]);
  CHECK(speaker_vector(m, shuffled) == v);

  const std::vector<Frames> one{utts[0]};
  const std::vector<Frames> copies(4, utts[0]);
  // Renormalizing a unit vector may move the last bit.
  const auto single = embed_utterance(m, utts[0]);
  for (std::size_t k = 0; k < kEmbeddingDim; ++k) {
    CHECK(speaker_vector(m, one).values[k] == doctest::Approx(single.values[k]).epsilon(1e-14));
  }
  const auto vc = speaker_vector(m, copies);
  for (std::size_t k = 0; k < kEmbeddingDim; ++k) CHECK(vc.values[k] == doctest::Approx(speaker_vector(m, one).values[k]).epsilon(1e-12));

  CHECK_THROWS_AS(speaker_vector(m, std::vector<Frames>{}), Error);
}

TEST_CASE("embeddings separate speakers on the neutral test split") {
  const auto& m = trained().training.model;
  const auto& c = trained().corpus;
  std::vector<std::pair<std::string, SpeakerEmbedding>> embs;
  for (const auto* u : select(c.test, std::nullopt, Emotion::neutral)) embs.emplace_back(u->speaker, embed_utterance(m, u->features));

  double within = 0, cross = 0;
  std::size_t nw = 0, nc = 0;
  for (std::size_t i = 0; i < embs.size(); ++i) {
    for (std::size_t j = i + 1; j < embs.size(); ++j) {
      const double s = secs(embs[i].second, embs[j].second);
      if (embs[i].first == embs[j].first) {
        within += s;
        ++nw;
      } else {
        cross += s;
        ++nc;
      }
    }
  }
  CHECK(within / nw - cross / nc >= 0.2);

  // Triples (anchor, same speaker, other speaker).
  std::size_t good = 0, total = 0;
  for (std::size_t a = 0; a < embs.size(); a += 3) {
    for (std::size_t p = 0; p < embs.size(); ++p) {
      if (p == a || embs[p].first != embs[a].first) continue;
      for (std::size_t n = 0; n < embs.size(); n += 5) {
        if (embs[n].first == embs[a].first) continue;
        good += secs(embs[a].second, embs[p].second) > secs(embs[a].second, embs[n].second);
        ++total;
      }
    }
  }
  REQUIRE(total > 0);
  CHECK(static_cast<double>(good) / total >= 0.9);
}

TEST_CASE("speaker table sources") {
  const auto& t = trained();
  const auto table = build_speaker_table(t.training.model, t.corpus);
  CHECK(table.size() == 14);
  CHECK(table.at("s00").source == "train");
  CHECK(table.at("e03").source == "train");
  CHECK(table.at("u00").source == "reference");
  for (const auto& [id, e] : table) CHECK(e.embedding.normalized);
}
