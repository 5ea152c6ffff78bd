#include <cmath>

#include "doctest.h"
#include "emovec/acoustic_model.hpp"
#include "emovec/synth_data.hpp"
#include "testing.hpp"

using namespace emovec;

namespace {

using testing::perturbed;
using testing::random_batch;

double frobenius(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("layout is fixed by the config") {
  const ModelConfig c;
  const auto layout = c.layout();
  std::vector<std::string> names;
  for (const auto& [n, s] : layout) names.push_back(n);
  CHECK(names == std::vector<std::string>{"dec.b2", "dec.b3", "dec.w2", "dec.w3", "emb", "enc.b1", "enc.w1", "spk.proj"});
  const auto p = init_params(c, 1);
  CHECK(p.at("enc.w1").shape() == Shape{64, 17});
  CHECK(p.at("spk.proj").shape() == Shape{64, 16});
  CHECK(p.at("dec.w3").shape() == Shape{11, 64});
  CHECK(p.at("emb").shape() == Shape{32, 16});
}

TEST_CASE("zero parameters give zero frames") {
  const auto w = DenseParams::zeros({});
  const std::vector<int> tokens{0, 5, 31};
  const std::vector<double> spk(kSpeakerDim, 0.7);
  for (const auto& f : forward(w, tokens, spk)) {
    for (double v : f) CHECK(v == 0.0);
  }
}

TEST_CASE("forward is deterministic and validates inputs") {
  const auto p = init_params({}, 3);
  const std::vector<int> tokens{1, 2, 3, 4};
  const SpeakerEmbedding spk{std::vector<double>(kSpeakerDim, 0.25), true};
  CHECK(forward(p, tokens, spk) == forward(p, tokens, spk));
  const std::vector<int> bad{1, 99};
  CHECK_THROWS_AS(forward(p, bad, spk), Error);
  const SpeakerEmbedding short_spk{std::vector<double>(3, 0.1), false};
  CHECK_THROWS_AS(forward(p, tokens, short_spk), Error);
  ParameterSet missing = p;
  missing = ParameterSet{};
  for (const auto& [n, t] : p.tensors())
    if (n != "dec.b3") missing.insert(t);
  CHECK_THROWS_AS(DenseParams::from_params(missing), IncompatibleError);
}

TEST_CASE("speaker perturbation is bounded by the layer Lipschitz product") {
  const auto w = perturbed(17);
  const double bound_factor = frobenius(w.w3) * frobenius(w.w2) * frobenius(w.proj);
  Rng rng(18);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<int> tokens;
    for (int i = 0; i < 10; ++i) tokens.push_back(static_cast<int>(rng.below(kVocabSize)));
    std::vector<double> s(kSpeakerDim), s2(kSpeakerDim);
    double dn = 0;
    for (std::size_t k = 0; k < kSpeakerDim; ++k) {
      s[k] = rng.normal();
      const double d = rng.normal(0.0, 0.1);
      s2[k] = s[k] + d;
      dn += d * d;
    }
    dn = std::sqrt(dn);
    const auto a = forward(w, tokens, s);
    const auto b = forward(w, tokens, s2);
    for (std::size_t t = 0; t < a.size(); ++t) {
      double diff = 0;
      for (std::size_t d = 0; d < kFeatureDim; ++d) diff += (a[t][d] - b[t][d]) * (a[t][d] - b[t][d]);
      CHECK(std::sqrt(diff) <= bound_factor * dn);
    }
  }
}

TEST_CASE("loss is zero at the target and follows the closed form") {
  const auto w = perturbed(5);
  Rng rng(6);
  auto b = random_batch(rng, 3);
  // Copy in place: the samples hold spans into the existing target buffers.
  for (std::size_t u = 0; u < b.targets.size(); ++u) {
    const auto p = forward(w, b.tokens[u], b.speakers[u]);
    std::copy(p.begin(), p.end(), b.targets[u].begin());
  }
  const auto lg = loss_and_grad(w, b.samples);
  CHECK(lg.loss == 0.0);
  lg.grad.for_each([](const std::string&, const std::vector<double>& g) {
    for (double v : g) CHECK(v == 0.0);
  });

  // Doubling the targets: loss = mean((p - 2p)^2) = mean(p^2).
  double sum = 0;
  std::size_t n = 0;
  for (auto& t : b.targets) {
    for (auto& f : t) {
      for (auto& v : f) {
        sum += v * v;
        v *= 2.0;
        ++n;
      }
    }
  }
  CHECK(mse_loss(w, b.samples) == doctest::Approx(sum / static_cast<double>(n)).epsilon(1e-12));
}

TEST_CASE("analytic gradient matches central differences") {
  Rng rng(31);
  const auto w = perturbed(30);
  const auto b = random_batch(rng, 2);
  for (const auto& c : testing::gradient_check(w, b.samples, 1e-3)) {
    INFO(c.tensor);
    CHECK(c.norm_error < 1e-4);
    // Plain central differences at 1e-3 carry O(eps^2) truncation error that
    // swamps entries near 1e-5, so entrywise agreement is checked against the
    // Richardson-extrapolated quotient.
    CHECK(c.max_entry_error_extrapolated < 1e-4);
  }
}

TEST_CASE("model config is recovered from a checkpoint") {
  ModelConfig c;
  c.embed_dim = 5;
  c.hidden = 7;
  CHECK(ModelConfig::infer(init_params(c, 1)) == c);
  CHECK(ModelConfig::infer(init_params({}, 1)) == ModelConfig{});
  ParameterSet other;
  other.insert(TensorEntry("emb", {3, 2}, std::vector<float>(6)));
  CHECK_THROWS_AS(ModelConfig::infer(other), Error);
}

TEST_CASE("init_params") {
  const ModelConfig c;
  const auto a = init_params(c, 9);
  CHECK(a == init_params(c, 9));
  CHECK_FALSE(a == init_params(c, 10));
  for (const auto& [name, shape] : c.layout()) {
    const auto& t = a.at(name);
    if (shape.size() == 1) {
      for (float v : t.data()) CHECK(v == 0.0f);
    } else {
      const double bound = std::sqrt(6.0 / static_cast<double>(shape[0] + shape[1]));
      for (float v : t.data()) {
        CHECK(std::fabs(static_cast<double>(v)) < bound);
      }
    }
  }
}

TEST_CASE("training") {
  Rng rng(40);
  const auto b = random_batch(rng, 8);
  const auto init = init_params({}, 41);
  TrainHyper h;
  h.batch_size = 4;
  h.seed = 3;

  SUBCASE("zero steps keeps the parameters and updates meta") {
    h.steps = 0;
    const auto out = train(init, b.samples, {}, h);
    for (const auto& [name, t] : init.tensors()) CHECK(out.at(name) == t);
    CHECK(out.meta_value("role") == "pretrained");
    CHECK(out.meta_value("steps") == "0");
    CHECK(out.meta_value("init_hash") == content_hash(init));
  }
  SUBCASE("deterministic, layout-preserving and loss-reducing") {
    h.steps = 50;
    h.role = "finetuned";
    h.extra_meta = {{"scope", "multi"}};
    const auto a = train(init, b.samples, b.samples, h);
    CHECK(a == train(init, b.samples, b.samples, h));
    CHECK(check_compatible(a, init).compatible());
    CHECK(a.meta_value("role") == "finetuned");
    CHECK(a.meta_value("scope") == "multi");
    CHECK(std::stod(*a.meta_value("train_loss")) < mse_loss(DenseParams::from_params(init), b.samples));
  }
  SUBCASE("divergence aborts") {
    h.steps = 200;
    h.learning_rate = 1e4;
    CHECK_THROWS_AS(train(init, b.samples, {}, h), Error);
  }
}

TEST_CASE("samples need a speaker vector") {
  const auto c = build_corpus({2, 0, 0, 10, 4, 8, 0.1, 1.0, 0.8, 0.1, {Emotion::angry}}, 1);
  SpeakerVectorTable table;
  CHECK_THROWS_AS(make_samples(std::span<const Utterance>(c.train), table), Error);
  for (const auto& s : c.speakers) table[s.id] = {{std::vector<double>(kSpeakerDim, 0.0), false}, "train"};
  CHECK(make_samples(std::span<const Utterance>(c.train), table).size() == c.train.size());
}
