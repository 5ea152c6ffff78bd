#include "emovec/acoustic_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "emovec/rng.hpp"
#include "emovec/vector_arith.hpp"

namespace emovec {
namespace {

bool all_finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

std::string first_nonfinite_tensor(const DenseParams& w, const DenseParams* grad) {
  std::string found;
  w.for_each([&](const std::string& name, const std::vector<double>& v) {
    if (found.empty() && !all_finite(v)) found = "parameter " + name;
  });
  if (found.empty() && grad != nullptr) {
    grad->for_each([&](const std::string& name, const std::vector<double>& v) {
      if (found.empty() && !all_finite(v)) found = "gradient " + name;
    });
  }
  return found.empty() ? "targets or speaker vectors" : found;
}

void check_inputs(const ModelConfig& c, std::span<const int> tokens, std::span<const double> speaker) {
  if (speaker.size() != c.speaker_dim) {
    throw Error("speaker vector has dimension " + std::to_string(speaker.size()) + ", model expects " +
                std::to_string(c.speaker_dim));
  }
  for (int t : tokens) {
    if (t < 0 || static_cast<std::size_t>(t) >= c.vocab) {
      throw Error("token id " + std::to_string(t) + " outside [0, " + std::to_string(c.vocab - 1) + "]");
    }
  }
}

// Accumulates the gradient of sum_t sum_d scale * (y - target)^2 into grad
// and returns the unscaled squared error.
double accumulate(const DenseParams& w, const Sample& s, double scale, DenseParams& grad) {
  const auto& c = w.config;
  const std::size_t in = c.input_dim(), H = c.hidden, S = c.speaker_dim, D = c.feature_dim, E = c.embed_dim;
  const ForwardTrace tr = forward_trace(w, s.tokens, s.speaker);
  if (s.target.size() != s.tokens.size()) throw Error("sample has mismatched token and target lengths");

  std::vector<double> dy(D), dg(H), da2(H), dhc(H), da1(H);
  double sq = 0.0;
  for (std::size_t t = 0; t < s.tokens.size(); ++t) {
    const double* x = &tr.x[t * in];
    const double* h = &tr.h[t * H];
    const double* hc = &tr.h_cond[t * H];
    const double* g = &tr.g[t * H];
    const double* y = &tr.y[t * D];
    for (std::size_t d = 0; d < D; ++d) {
      const double err = y[d] - s.target[t][d];
      sq += err * err;
      dy[d] = 2.0 * scale * err;
    }
    std::fill(dg.begin(), dg.end(), 0.0);
    for (std::size_t d = 0; d < D; ++d) {
      grad.b3[d] += dy[d];
      const double* w3row = &w.w3[d * H];
      double* gw3row = &grad.w3[d * H];
      for (std::size_t j = 0; j < H; ++j) {
        gw3row[j] += dy[d] * g[j];
        dg[j] += w3row[j] * dy[d];
      }
    }
    for (std::size_t i = 0; i < H; ++i) da2[i] = dg[i] * (1.0 - g[i] * g[i]);
    std::fill(dhc.begin(), dhc.end(), 0.0);
    for (std::size_t i = 0; i < H; ++i) {
      grad.b2[i] += da2[i];
      const double* w2row = &w.w2[i * H];
      double* gw2row = &grad.w2[i * H];
      for (std::size_t j = 0; j < H; ++j) {
        gw2row[j] += da2[i] * hc[j];
        dhc[j] += w2row[j] * da2[i];
      }
    }
    for (std::size_t i = 0; i < H; ++i) {
      double* gprow = &grad.proj[i * S];
      for (std::size_t k = 0; k < S; ++k) gprow[k] += dhc[i] * s.speaker[k];
      da1[i] = dhc[i] * (1.0 - h[i] * h[i]);
    }
    double* gemb = &grad.emb[static_cast<std::size_t>(s.tokens[t]) * E];
    for (std::size_t i = 0; i < H; ++i) {
      grad.b1[i] += da1[i];
      const double* w1row = &w.w1[i * in];
      double* gw1row = &grad.w1[i * in];
      for (std::size_t j = 0; j < in; ++j) gw1row[j] += da1[i] * x[j];
      for (std::size_t k = 0; k < E; ++k) gemb[k] += w1row[k] * da1[i];
    }
  }
  return sq;
}

std::size_t total_tokens(std::span<const Sample> batch) {
  std::size_t n = 0;
  for (const auto& s : batch) n += s.tokens.size();
  if (n == 0) throw Error("batch contains no tokens");
  return n;
}

// Fisher-Yates with the portable generator.
void shuffle(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

}  // namespace

std::vector<std::pair<std::string, Shape>> ModelConfig::layout() const {
  return {
      {"dec.b2", {hidden}},
      {"dec.b3", {feature_dim}},
      {"dec.w2", {hidden, hidden}},
      {"dec.w3", {feature_dim, hidden}},
      {"emb", {vocab, embed_dim}},
      {"enc.b1", {hidden}},
      {"enc.w1", {hidden, input_dim()}},
      {"spk.proj", {hidden, speaker_dim}},
  };
}

void ModelConfig::validate() const {
  if (vocab == 0 || embed_dim == 0 || hidden == 0 || speaker_dim == 0 || feature_dim == 0) {
    throw Error("model config dimensions must be positive");
  }
}

ModelConfig ModelConfig::infer(const ParameterSet& params) {
  const auto* emb = params.find("emb");
  const auto* out = params.find("dec.w3");
  const auto* proj = params.find("spk.proj");
  if (!emb || !out || !proj || emb->shape().size() != 2 || out->shape().size() != 2 || proj->shape().size() != 2) {
    throw Error("checkpoint is not an acoustic model: needs 2-d emb, spk.proj and dec.w3 tensors");
  }
  ModelConfig c;
  c.vocab = emb->shape()[0];
  c.embed_dim = emb->shape()[1];
  c.feature_dim = out->shape()[0];
  c.hidden = out->shape()[1];
  c.speaker_dim = proj->shape()[1];
  c.validate();
  return c;
}

DenseParams DenseParams::zeros(const ModelConfig& config) {
  config.validate();
  DenseParams p;
  p.config = config;
  for (const auto& [name, shape] : config.layout()) p.tensor(name).assign(shape_elements(shape), 0.0);
  return p;
}

DenseParams DenseParams::from_params(const ParameterSet& params, const ModelConfig& config) {
  DenseParams p = zeros(config);
  require_compatible(params, p.to_params(), "model parameters vs model config");
  p.for_each([&](const std::string& name, std::vector<double>& v) {
    const auto src = params.at(name).data();
    std::copy(src.begin(), src.end(), v.begin());
  });
  return p;
}

ParameterSet DenseParams::to_params() const {
  ParameterSet out;
  for (const auto& [name, shape] : config.layout()) {
    const auto& v = tensor(name);
    out.insert(TensorEntry(name, shape, std::vector<float>(v.begin(), v.end())));
  }
  return out;
}

std::vector<double>& DenseParams::tensor(std::string_view name) {
  return const_cast<std::vector<double>&>(std::as_const(*this).tensor(name));
}

const std::vector<double>& DenseParams::tensor(std::string_view name) const {
  if (name == "emb") return emb;
  if (name == "enc.w1") return w1;
  if (name == "enc.b1") return b1;
  if (name == "spk.proj") return proj;
  if (name == "dec.w2") return w2;
  if (name == "dec.b2") return b2;
  if (name == "dec.w3") return w3;
  if (name == "dec.b3") return b3;
  throw Error("unknown model tensor '" + std::string(name) + "'");
}

ForwardTrace forward_trace(const DenseParams& w, std::span<const int> tokens, std::span<const double> speaker) {
  const auto& c = w.config;
  check_inputs(c, tokens, speaker);
  const std::size_t in = c.input_dim(), H = c.hidden, S = c.speaker_dim, D = c.feature_dim, E = c.embed_dim;
  const std::size_t L = tokens.size();

  ForwardTrace tr;
  tr.tokens.assign(tokens.begin(), tokens.end());
  tr.speaker.assign(speaker.begin(), speaker.end());
  tr.x.resize(L * in);
  tr.h.resize(L * H);
  tr.h_cond.resize(L * H);
  tr.g.resize(L * H);
  tr.y.resize(L * D);

  // The speaker offset P s is shared by every token.
  std::vector<double> offset(H, 0.0);
  for (std::size_t i = 0; i < H; ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < S; ++k) acc += w.proj[i * S + k] * speaker[k];
    offset[i] = acc;
  }

  for (std::size_t t = 0; t < L; ++t) {
    double* x = &tr.x[t * in];
    const double* e = &w.emb[static_cast<std::size_t>(tokens[t]) * E];
    std::copy(e, e + E, x);
    x[E] = static_cast<double>(t) / static_cast<double>(L);

    double* h = &tr.h[t * H];
    double* hc = &tr.h_cond[t * H];
    for (std::size_t i = 0; i < H; ++i) {
      double a = w.b1[i];
      const double* row = &w.w1[i * in];
      for (std::size_t j = 0; j < in; ++j) a += row[j] * x[j];
      h[i] = std::tanh(a);
      hc[i] = h[i] + offset[i];
    }
    double* g = &tr.g[t * H];
    for (std::size_t i = 0; i < H; ++i) {
      double a = w.b2[i];
      const double* row = &w.w2[i * H];
      for (std::size_t j = 0; j < H; ++j) a += row[j] * hc[j];
      g[i] = std::tanh(a);
    }
    double* y = &tr.y[t * D];
    for (std::size_t d = 0; d < D; ++d) {
      double a = w.b3[d];
      const double* row = &w.w3[d * H];
      for (std::size_t j = 0; j < H; ++j) a += row[j] * g[j];
      y[d] = a;
    }
  }
  return tr;
}

Frames forward(const DenseParams& w, std::span<const int> tokens, std::span<const double> speaker) {
  if (w.config.feature_dim != kFeatureDim) throw Error("forward: frames require feature_dim = 11");
  const auto tr = forward_trace(w, tokens, speaker);
  Frames out(tokens.size());
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    std::copy_n(&tr.y[t * kFeatureDim], kFeatureDim, out[t].begin());
  }
  return out;
}

Frames forward(const ParameterSet& params, std::span<const int> tokens, const SpeakerEmbedding& speaker,
               const ModelConfig& config) {
  return forward(DenseParams::from_params(params, config), tokens, speaker.values);
}

std::vector<Sample> make_samples(std::span<const Utterance* const> utterances, const SpeakerVectorTable& table) {
  std::vector<Sample> out;
  out.reserve(utterances.size());
  for (const Utterance* u : utterances) {
    auto it = table.find(u->speaker);
    if (it == table.end()) throw Error("no speaker vector for speaker '" + u->speaker + "' (utterance " + u->id + ")");
    out.push_back({u->tokens, u->features, it->second.embedding.values});
  }
  return out;
}

std::vector<Sample> make_samples(std::span<const Utterance> utterances, const SpeakerVectorTable& table) {
  std::vector<const Utterance*> ptrs;
  ptrs.reserve(utterances.size());
  for (const auto& u : utterances) ptrs.push_back(&u);
  return make_samples(ptrs, table);
}

double mse_loss(const DenseParams& w, std::span<const Sample> batch) {
  const std::size_t n = total_tokens(batch);
  double sq = 0.0;
  for (const auto& s : batch) {
    const Frames y = forward(w, s.tokens, s.speaker);
    if (s.target.size() != y.size()) throw Error("sample has mismatched token and target lengths");
    for (std::size_t t = 0; t < y.size(); ++t)
      for (std::size_t d = 0; d < kFeatureDim; ++d) {
        const double err = y[t][d] - s.target[t][d];
        sq += err * err;
      }
  }
  return sq / static_cast<double>(n * w.config.feature_dim);
}

LossAndGrad loss_and_grad(const DenseParams& w, std::span<const Sample> batch) {
  const std::size_t n = total_tokens(batch);
  const double scale = 1.0 / static_cast<double>(n * w.config.feature_dim);
  LossAndGrad out{0.0, DenseParams::zeros(w.config)};
  double sq = 0.0;
  for (const auto& s : batch) sq += accumulate(w, s, scale, out.grad);
  out.loss = sq * scale;
  bool finite = std::isfinite(out.loss);
  out.grad.for_each([&](const std::string&, const std::vector<double>& v) { finite = finite && all_finite(v); });
  if (!finite) throw Error("non-finite loss or gradient; offending tensor: " + first_nonfinite_tensor(w, &out.grad));
  return out;
}

LossAndGrad loss_and_grad(const ParameterSet& params, std::span<const Sample> batch, const ModelConfig& config) {
  return loss_and_grad(DenseParams::from_params(params, config), batch);
}

ParameterSet init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ParameterSet out;
  for (const auto& [name, shape] : config.layout()) {
    std::vector<float> data(shape_elements(shape), 0.0f);
    if (shape.size() == 2) {
      const double a = std::sqrt(6.0 / static_cast<double>(shape[0] + shape[1]));
      Rng rng(derive_seed(seed, {string_key("init"), string_key(name.c_str())}));
      for (auto& v : data) {
        do {
          v = static_cast<float>(rng.uniform(-a, a));
        } while (!(std::abs(static_cast<double>(v)) < a));
      }
    }
    out.insert(TensorEntry(name, shape, std::move(data)));
  }
  out.set_meta(meta_keys::seed, std::to_string(seed));
  return out;
}

ParameterSet train(const ParameterSet& init, std::span<const Sample> train_set, std::span<const Sample> val_set,
                   const TrainHyper& hyper, const ModelConfig& config) {
  if (hyper.steps < 0) throw Error("train: steps must be >= 0");
  if (hyper.batch_size < 1) throw Error("train: batch_size must be >= 1");
  if (hyper.steps > 0 && train_set.empty()) throw Error("train: training split is empty");

  DenseParams w = DenseParams::from_params(init, config);
  DenseParams velocity = DenseParams::zeros(config);
  Rng rng(derive_seed(hyper.seed, {string_key("batches")}));
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t cursor = order.size();
  std::vector<Sample> batch;

  for (int step = 0; step < hyper.steps; ++step) {
    batch.clear();
    for (int b = 0; b < hyper.batch_size; ++b) {
      if (cursor == order.size()) {
        shuffle(order, rng);
        cursor = 0;
      }
      batch.push_back(train_set[order[cursor++]]);
    }
    const auto lg = loss_and_grad(w, batch);
    if (lg.loss > hyper.divergence_threshold) {
      throw Error("train: diverged at step " + std::to_string(step) + " with loss " + format_double(lg.loss) +
                  " (threshold " + format_double(hyper.divergence_threshold) + ")");
    }
    const auto update = [&](std::vector<double>& p, std::vector<double>& v, const std::vector<double>& g) {
      for (std::size_t i = 0; i < p.size(); ++i) {
        v[i] = hyper.momentum * v[i] + g[i];
        p[i] -= hyper.learning_rate * v[i];
      }
    };
    for (const auto& [name, shape] : config.layout()) update(w.tensor(name), velocity.tensor(name), lg.grad.tensor(name));
  }

  ParameterSet out = w.to_params();
  // Losses are reported for the rounded f32 parameters actually returned.
  const DenseParams rounded = DenseParams::from_params(out, config);
  out.set_meta(meta_keys::role, hyper.role);
  out.set_meta(meta_keys::steps, std::to_string(hyper.steps));
  out.set_meta(meta_keys::seed, std::to_string(hyper.seed));
  out.set_meta("init_hash", content_hash(init));
  if (!train_set.empty()) out.set_meta("train_loss", format_double(mse_loss(rounded, train_set)));
  if (!val_set.empty()) out.set_meta("val_loss", format_double(mse_loss(rounded, val_set)));
  for (const auto& [k, v] : hyper.extra_meta) out.set_meta(k, v);
  return out;
}

}  // namespace emovec
