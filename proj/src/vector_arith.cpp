#include "emovec/vector_arith.hpp"

#include <charconv>
#include <cmath>

#include "emovec/log.hpp"

namespace emovec {
namespace {

constexpr double kAlphaWarnLow = 0.0;
constexpr double kAlphaWarnHigh = 1.2;

std::string require_meta(const ParameterSet& p, const char* key) {
  auto v = p.meta_value(key);
  if (!v) throw Error(std::string("emotion vector is missing meta.") + key);
  return *v;
}

VectorScope scope_from_sources(const ParameterSet& emo, const ParameterSet& pre) {
  const auto scope = emo.meta_value(meta_keys::scope).value_or(pre.meta_value(meta_keys::scope).value_or("single"));
  return scope == "multi" ? VectorScope::speaker_agnostic : VectorScope::single_speaker;
}

}  // namespace

std::string_view to_string(VectorScope scope) {
  return scope == VectorScope::speaker_agnostic ? "speaker-agnostic" : "single-speaker";
}

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

EmotionVector::EmotionVector(ParameterSet params) : params_(std::move(params)) {
  if (params_.meta_value(meta_keys::role) != "vector") throw Error("emotion vector must have meta.role = vector");
  require_meta(params_, meta_keys::emotion);
  require_meta(params_, meta_keys::source_emo);
  require_meta(params_, meta_keys::source_pre);
  const auto scope = require_meta(params_, meta_keys::scope);
  if (scope != "single-speaker" && scope != "speaker-agnostic") {
    throw Error("emotion vector meta.scope must be single-speaker or speaker-agnostic, got '" + scope + "'");
  }
}

std::string EmotionVector::label() const { return *params_.meta_value(meta_keys::emotion); }
VectorScope EmotionVector::scope() const {
  return params_.meta_value(meta_keys::scope) == "speaker-agnostic" ? VectorScope::speaker_agnostic
                                                                     : VectorScope::single_speaker;
}
std::string EmotionVector::source_emo() const { return *params_.meta_value(meta_keys::source_emo); }
std::string EmotionVector::source_pre() const { return *params_.meta_value(meta_keys::source_pre); }

EmotionVector extract_vector(const ParameterSet& emo, const ParameterSet& pre, const std::string& label) {
  require_compatible(emo, pre, "extract_vector(emo, pre)");
  if (auto role = pre.meta_value(meta_keys::role); role != "pretrained") {
    log_warn("extract_vector: pre has meta.role '" + role.value_or("<unset>") + "', expected 'pretrained'");
  }

  ParameterSet tau;
  for (const auto& [name, e] : emo.tensors()) {
    const auto p = pre.at(name).data();
    const auto src = e.data();
    std::vector<float> out(src.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = static_cast<float>(static_cast<double>(src[i]) - static_cast<double>(p[i]));
    }
    tau.insert(TensorEntry(name, e.shape(), std::move(out)));
  }
  tau.set_meta(meta_keys::role, "vector");
  tau.set_meta(meta_keys::emotion, label);
  tau.set_meta(meta_keys::scope, std::string(to_string(scope_from_sources(emo, pre))));
  tau.set_meta(meta_keys::source_emo, content_hash(emo));
  tau.set_meta(meta_keys::source_pre, content_hash(pre));
  return EmotionVector(std::move(tau));
}

ParameterSet apply_vector(const ParameterSet& target, const EmotionVector& tau, double alpha) {
  if (!std::isfinite(alpha)) throw Error("apply_vector: alpha must be finite");
  require_compatible(target, tau.params(), "apply_vector(target, vector)");
  if (alpha < kAlphaWarnLow || alpha > kAlphaWarnHigh) {
    log_warn("apply_vector: alpha " + format_double(alpha) + " is outside [0, 1.2]");
  }

  ParameterSet merged;
  for (const auto& [name, t] : target.tensors()) {
    if (alpha == 0.0) {
      // Exact copy; t + 0 * tau would turn -0.0 into +0.0.
      merged.insert(t);
      continue;
    }
    const auto v = tau.params().at(name).data();
    const auto src = t.data();
    std::vector<float> out(src.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = static_cast<float>(static_cast<double>(src[i]) + alpha * static_cast<double>(v[i]));
    }
    merged.insert(TensorEntry(name, t.shape(), std::move(out)));
  }
  for (const auto& [k, v] : target.meta()) merged.set_meta(k, v);
  merged.set_meta(meta_keys::role, "merged");
  merged.set_meta(meta_keys::emotion, tau.label());
  merged.set_meta(meta_keys::alpha, format_double(alpha));
  merged.set_meta(meta_keys::vector_hash, tau.hash());
  merged.set_meta(meta_keys::target_hash, content_hash(target));
  return merged;
}

EmotionVector combine(const std::vector<std::pair<EmotionVector, double>>& weighted) {
  if (weighted.empty()) throw Error("combine: vector list is empty");
  const ParameterSet& first = weighted.front().first.params();
  for (std::size_t k = 1; k < weighted.size(); ++k) {
    require_compatible(first, weighted[k].first.params(), "combine(vector 0, vector " + std::to_string(k) + ")");
  }
  for (const auto& [_, w] : weighted) {
    if (!std::isfinite(w)) throw Error("combine: weights must be finite");
  }

  ParameterSet sum;
  for (const auto& [name, t] : first.tensors()) {
    std::vector<double> acc(t.size(), 0.0);
    for (const auto& [vec, w] : weighted) {
      const auto d = vec.params().at(name).data();
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += w * static_cast<double>(d[i]);
    }
    std::vector<float> out(acc.begin(), acc.end());
    sum.insert(TensorEntry(name, t.shape(), std::move(out)));
  }

  std::string label, emo_sources, pre_sources;
  bool agnostic = true;
  for (const auto& [vec, w] : weighted) {
    const auto join = [](std::string& dst, const std::string& part) { dst += (dst.empty() ? "" : "+") + part; };
    join(label, vec.label());
    join(emo_sources, vec.source_emo());
    join(pre_sources, vec.source_pre());
    agnostic = agnostic && vec.scope() == VectorScope::speaker_agnostic;
  }
  std::string weights;
  for (const auto& [vec, w] : weighted) weights += (weights.empty() ? "" : ",") + format_double(w);

  sum.set_meta(meta_keys::role, "vector");
  sum.set_meta(meta_keys::emotion, label);
  sum.set_meta(meta_keys::scope, std::string(to_string(agnostic ? VectorScope::speaker_agnostic
                                                                  : VectorScope::single_speaker)));
  sum.set_meta(meta_keys::source_emo, emo_sources);
  sum.set_meta(meta_keys::source_pre, pre_sources);
  sum.set_meta("combine_weights", weights);
  return EmotionVector(std::move(sum));
}

VectorStats vector_stats(const ParameterSet& set) {
  VectorStats stats;
  stats.global.name = "<global>";
  double global_sq = 0.0;
  std::size_t global_near_zero = 0;
  for (const auto& [name, t] : set.tensors()) {
    TensorStats ts;
    ts.name = name;
    ts.count = t.size();
    double sq = 0.0;
    std::size_t near_zero = 0;
    for (float f : t.data()) {
      const double v = f;
      sq += v * v;
      ts.max_abs = std::max(ts.max_abs, std::abs(v));
      if (std::abs(v) < kNearZero) ++near_zero;
    }
    ts.l2 = std::sqrt(sq);
    ts.near_zero_fraction = ts.count ? static_cast<double>(near_zero) / static_cast<double>(ts.count) : 0.0;
    global_sq += sq;
    global_near_zero += near_zero;
    stats.global.count += ts.count;
    stats.global.max_abs = std::max(stats.global.max_abs, ts.max_abs);
    stats.tensors.push_back(std::move(ts));
  }
  stats.global.l2 = std::sqrt(global_sq);
  stats.global.near_zero_fraction =
      stats.global.count ? static_cast<double>(global_near_zero) / static_cast<double>(stats.global.count) : 0.0;
  return stats;
}

}  // namespace emovec
