#include "emovec/speaker_embed.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "emovec/error.hpp"
#include "emovec/rng.hpp"

namespace emovec {
namespace {

constexpr double kUnitTolerance = 1e-6;

SpeakerEmbedding normalized(std::span<const double> z) {
  double sq = 0.0;
  for (double v : z) sq += v * v;
  const double norm = std::sqrt(sq);
  if (!(norm > 0.0) || !std::isfinite(norm)) throw Error("embedding has zero or non-finite norm");
  SpeakerEmbedding e;
  e.values.reserve(z.size());
  for (double v : z) e.values.push_back(v / norm);
  double check = 0.0;
  for (double v : e.values) check += v * v;
  e.normalized = std::abs(std::sqrt(check) - 1.0) <= kUnitTolerance;
  return e;
}

std::vector<double> rounded_to_float(std::vector<double> v) {
  for (auto& x : v) x = static_cast<float>(x);
  return v;
}

std::string join(const std::vector<std::string>& parts) {
  std::string s;
  for (const auto& p : parts) s += (s.empty() ? "" : ",") + p;
  return s;
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    out.push_back(s.substr(start, comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

PooledStats pool_stats(std::span<const Frame> frames) {
  if (frames.empty()) throw Error("cannot pool an empty frame sequence");
  PooledStats p{};
  const double n = static_cast<double>(frames.size());
  for (std::size_t d = 0; d < kFeatureDim; ++d) {
    double sum = 0.0;
    for (const auto& f : frames) sum += f[d];
    const double mean = sum / n;
    double var = 0.0;
    for (const auto& f : frames) var += (f[d] - mean) * (f[d] - mean);
    p[d] = mean;
    p[kFeatureDim + d] = std::sqrt(var / n);
  }
  return p;
}

std::array<double, kEmbeddingDim> EmbedderModel::bottleneck(std::span<const Frame> frames) const {
  const PooledStats p = pool_stats(frames);
  std::array<double, kEmbeddingDim> z{};
  for (std::size_t i = 0; i < kEmbeddingDim; ++i) {
    double a = bottleneck_b[i];
    for (std::size_t j = 0; j < kPooledDim; ++j) a += bottleneck_w[i * kPooledDim + j] * p[j];
    z[i] = a;
  }
  return z;
}

std::vector<double> EmbedderModel::logits(std::span<const Frame> frames) const {
  const auto z = bottleneck(frames);
  std::vector<double> out(num_speakers());
  for (std::size_t c = 0; c < out.size(); ++c) {
    double a = head_b[c];
    for (std::size_t i = 0; i < kEmbeddingDim; ++i) a += head_w[c * kEmbeddingDim + i] * z[i];
    out[c] = a;
  }
  return out;
}

std::size_t EmbedderModel::classify(std::span<const Frame> frames) const {
  const auto l = logits(frames);
  return static_cast<std::size_t>(std::max_element(l.begin(), l.end()) - l.begin());
}

ParameterSet EmbedderModel::to_params() const {
  const auto n = num_speakers();
  const auto tensor = [](const char* name, Shape shape, const std::vector<double>& v) {
    return TensorEntry(name, std::move(shape), std::vector<float>(v.begin(), v.end()));
  };
  ParameterSet p;
  p.insert(tensor("bottleneck.w", {kEmbeddingDim, kPooledDim}, bottleneck_w));
  p.insert(tensor("bottleneck.b", {kEmbeddingDim}, bottleneck_b));
  p.insert(tensor("head.w", {n, kEmbeddingDim}, head_w));
  p.insert(tensor("head.b", {n}, head_b));
  p.set_meta(meta_keys::role, "embedder");
  p.set_meta("speakers", join(speakers));
  return p;
}

EmbedderModel EmbedderModel::from_params(const ParameterSet& params) {
  if (params.meta_value(meta_keys::role) != "embedder") throw Error("embedder checkpoint must have meta.role = embedder");
  EmbedderModel m;
  m.speakers = split_commas(params.meta_value("speakers").value_or(""));
  const auto n = m.num_speakers();
  const auto read = [&](const char* name, const Shape& shape) {
    const auto& t = params.at(name);
    if (t.shape() != shape) {
      throw Error(std::string("embedder tensor '") + name + "' has shape " + shape_string(t.shape()) + ", expected " +
                  shape_string(shape));
    }
    return std::vector<double>(t.data().begin(), t.data().end());
  };
  m.bottleneck_w = read("bottleneck.w", {kEmbeddingDim, kPooledDim});
  m.bottleneck_b = read("bottleneck.b", {kEmbeddingDim});
  m.head_w = read("head.w", {n, kEmbeddingDim});
  m.head_b = read("head.b", {n});
  return m;
}

double classification_accuracy(const EmbedderModel& model, std::span<const Utterance* const> utterances) {
  if (utterances.empty()) return 0.0;
  std::size_t correct = 0;
  for (const Utterance* u : utterances) {
    const auto k = model.classify(u->features);
    if (model.speakers[k] == u->speaker) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(utterances.size());
}

EmbedderTraining train_embedder(const Corpus& corpus, const EmbedderHyper& hyper) {
  std::vector<std::string> speakers;
  for (const auto& s : corpus.speakers)
    if (s.seen) speakers.push_back(s.id);
  if (speakers.size() < 2) throw Error("train_embedder: need at least 2 seen speakers, corpus has " +
                                       std::to_string(speakers.size()));
  if (hyper.steps < 0 || hyper.batch_size < 1) throw Error("train_embedder: invalid steps or batch size");

  std::vector<PooledStats> inputs;
  std::vector<std::size_t> labels;
  for (const auto& u : corpus.train) {
    if (u.emotion != Emotion::neutral) continue;
    const auto it = std::find(speakers.begin(), speakers.end(), u.speaker);
    if (it == speakers.end()) continue;
    inputs.push_back(pool_stats(u.features));
    labels.push_back(static_cast<std::size_t>(it - speakers.begin()));
  }
  if (inputs.empty()) throw Error("train_embedder: no neutral training utterances");

  // Standardize pooled inputs for conditioning; folded into the bottleneck
  // afterwards so the persisted model is a plain affine map.
  PooledStats mu{}, sd{};
  for (const auto& p : inputs)
    for (std::size_t j = 0; j < kPooledDim; ++j) mu[j] += p[j];
  for (auto& m : mu) m /= static_cast<double>(inputs.size());
  for (const auto& p : inputs)
    for (std::size_t j = 0; j < kPooledDim; ++j) sd[j] += (p[j] - mu[j]) * (p[j] - mu[j]);
  for (auto& s : sd) s = std::max(std::sqrt(s / static_cast<double>(inputs.size())), 1e-6);
  std::vector<PooledStats> xs = inputs;
  for (auto& p : xs)
    for (std::size_t j = 0; j < kPooledDim; ++j) p[j] = (p[j] - mu[j]) / sd[j];

  const std::size_t C = speakers.size(), Z = kEmbeddingDim, P = kPooledDim;
  std::vector<double> W(Z * P), b(Z, 0.0), V(C * Z, 0.0), c(C, 0.0);
  Rng init(derive_seed(hyper.seed, {string_key("embedder-init")}));
  const double a = std::sqrt(6.0 / static_cast<double>(Z + P));
  for (auto& w : W) w = init.uniform(-a, a);

  std::vector<double> vW(W.size(), 0.0), vb(b.size(), 0.0), vV(V.size(), 0.0), vc(c.size(), 0.0);
  std::vector<double> gW(W.size()), gb(b.size()), gV(V.size()), gc(c.size());
  Rng rng(derive_seed(hyper.seed, {string_key("embedder-batches")}));
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t cursor = order.size();
  std::vector<double> z(Z), logits(C), dz(Z);

  for (int step = 0; step < hyper.steps; ++step) {
    std::fill(gW.begin(), gW.end(), 0.0);
    std::fill(gb.begin(), gb.end(), 0.0);
    std::fill(gV.begin(), gV.end(), 0.0);
    std::fill(gc.begin(), gc.end(), 0.0);
    const double scale = 1.0 / hyper.batch_size;
    for (int k = 0; k < hyper.batch_size; ++k) {
      if (cursor == order.size()) {
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
        cursor = 0;
      }
      const std::size_t idx = order[cursor++];
      const auto& x = xs[idx];
      for (std::size_t i = 0; i < Z; ++i) {
        double acc = b[i];
        for (std::size_t j = 0; j < P; ++j) acc += W[i * P + j] * x[j];
        z[i] = acc;
      }
      double mx = -INFINITY;
      for (std::size_t k2 = 0; k2 < C; ++k2) {
        double acc = c[k2];
        for (std::size_t i = 0; i < Z; ++i) acc += V[k2 * Z + i] * z[i];
        logits[k2] = acc;
        mx = std::max(mx, acc);
      }
      double denom = 0.0;
      for (auto& l : logits) denom += (l = std::exp(l - mx));
      std::fill(dz.begin(), dz.end(), 0.0);
      for (std::size_t k2 = 0; k2 < C; ++k2) {
        const double dl = scale * (logits[k2] / denom - (k2 == labels[idx] ? 1.0 : 0.0));
        gc[k2] += dl;
        for (std::size_t i = 0; i < Z; ++i) {
          gV[k2 * Z + i] += dl * z[i];
          dz[i] += V[k2 * Z + i] * dl;
        }
      }
      for (std::size_t i = 0; i < Z; ++i) {
        gb[i] += dz[i];
        for (std::size_t j = 0; j < P; ++j) gW[i * P + j] += dz[i] * x[j];
      }
    }
    const auto update = [&](std::vector<double>& p, std::vector<double>& v, const std::vector<double>& g) {
      for (std::size_t i = 0; i < p.size(); ++i) {
        v[i] = hyper.momentum * v[i] + g[i];
        p[i] -= hyper.learning_rate * v[i];
      }
    };
    update(W, vW, gW);
    update(b, vb, gb);
    update(V, vV, gV);
    update(c, vc, gc);
  }

  EmbedderModel m;
  m.speakers = speakers;
  m.bottleneck_w.resize(Z * P);
  m.bottleneck_b.resize(Z);
  for (std::size_t i = 0; i < Z; ++i) {
    double shift = 0.0;
    for (std::size_t j = 0; j < P; ++j) {
      m.bottleneck_w[i * P + j] = W[i * P + j] / sd[j];
      shift += W[i * P + j] * mu[j] / sd[j];
    }
    m.bottleneck_b[i] = b[i] - shift;
  }
  // Center embeddings on the training mean (the usual mean subtraction
  // before cosine scoring); the head bias absorbs the shift so logits are
  // unchanged.
  std::vector<double> zmean(Z, 0.0);
  for (const auto& p : inputs) {
    for (std::size_t i = 0; i < Z; ++i) {
      double acc = m.bottleneck_b[i];
      for (std::size_t j = 0; j < P; ++j) acc += m.bottleneck_w[i * P + j] * p[j];
      zmean[i] += acc;
    }
  }
  for (auto& v : zmean) v /= static_cast<double>(inputs.size());
  for (std::size_t i = 0; i < Z; ++i) m.bottleneck_b[i] -= zmean[i];
  m.head_w = V;
  m.head_b = c;
  for (std::size_t k = 0; k < C; ++k)
    for (std::size_t i = 0; i < Z; ++i) m.head_b[k] += V[k * Z + i] * zmean[i];

  // Persisted as f32; round now so in-memory and reloaded models agree.
  m.bottleneck_w = rounded_to_float(std::move(m.bottleneck_w));
  m.bottleneck_b = rounded_to_float(std::move(m.bottleneck_b));
  m.head_w = rounded_to_float(std::move(m.head_w));
  m.head_b = rounded_to_float(std::move(m.head_b));

  std::vector<const Utterance*> heldout;
  for (const auto* split : {&corpus.val, &corpus.test}) {
    for (const auto& u : *split) {
      if (u.emotion == Emotion::neutral && corpus.speaker(u.speaker).seen) heldout.push_back(&u);
    }
  }
  const double accuracy = classification_accuracy(m, heldout);
  return {std::move(m), accuracy};
}

SpeakerEmbedding embed_utterance(const EmbedderModel& model, std::span<const Frame> frames) {
  if (frames.empty()) throw Error("embed_utterance: empty frame sequence");
  const auto z = model.bottleneck(frames);
  return normalized(z);
}

SpeakerEmbedding speaker_vector(const EmbedderModel& model, std::span<const Frames> utterances) {
  if (utterances.empty()) throw Error("speaker_vector: empty utterance list");
  std::vector<std::vector<double>> embeddings;
  embeddings.reserve(utterances.size());
  for (const auto& f : utterances) embeddings.push_back(embed_utterance(model, f).values);
  std::sort(embeddings.begin(), embeddings.end());
  std::vector<double> mean(kEmbeddingDim, 0.0);
  for (const auto& e : embeddings)
    for (std::size_t i = 0; i < kEmbeddingDim; ++i) mean[i] += e[i];
  for (auto& v : mean) v /= static_cast<double>(embeddings.size());
  return normalized(mean);
}

SpeakerEmbedding speaker_vector(const EmbedderModel& model, std::span<const Utterance* const> utterances) {
  std::vector<Frames> frames;
  frames.reserve(utterances.size());
  for (const auto* u : utterances) frames.push_back(u->features);
  return speaker_vector(model, frames);
}

double secs(const SpeakerEmbedding& a, const SpeakerEmbedding& b) {
  if (a.values.size() != b.values.size()) throw Error("secs: embeddings differ in dimension");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    dot += a.values[i] * b.values[i];
    na += a.values[i] * a.values[i];
    nb += b.values[i] * b.values[i];
  }
  if (!(na > 0.0) || !(nb > 0.0)) throw Error("secs: zero vector");
  return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

SpeakerVectorTable build_speaker_table(const EmbedderModel& model, const Corpus& corpus) {
  SpeakerVectorTable table;
  for (const auto& s : corpus.speakers) {
    const bool seen = s.seen;
    const auto utts = select(seen ? std::span<const Utterance>(corpus.train) : std::span<const Utterance>(corpus.test),
                             s.id, Emotion::neutral);
    if (utts.empty()) throw Error("speaker '" + s.id + "' has no neutral utterances for its speaker vector");
    table[s.id] = {speaker_vector(model, utts), seen ? "train" : "reference"};
  }
  return table;
}

}  // namespace emovec
