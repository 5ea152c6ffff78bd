#pragma once

// Emotion vectors: parameter-space differences between a fine-tuned and a
// pre-trained model, and their scaled application to compatible models.
// Every elementwise result is computed in double and rounded to float once.

#include <string>
#include <utility>
#include <vector>

#include "emovec/param_store.hpp"

namespace emovec {

enum class VectorScope { single_speaker, speaker_agnostic };

std::string_view to_string(VectorScope scope);

namespace meta_keys {
inline constexpr const char* source_emo = "source_emo";
inline constexpr const char* source_pre = "source_pre";
inline constexpr const char* alpha = "alpha";
inline constexpr const char* vector_hash = "vector_hash";
inline constexpr const char* target_hash = "target_hash";
}  // namespace meta_keys

// A parameter-shaped difference tagged with role "vector", its emotion
// label, its scope and the hashes of the two sets it was taken from.
class EmotionVector {
 public:
  // Validates the vector metadata; throws Error when it is missing.
  explicit EmotionVector(ParameterSet params);

  const ParameterSet& params() const noexcept { return params_; }
  std::string label() const;
  VectorScope scope() const;
  std::string source_emo() const;
  std::string source_pre() const;
  std::string hash() const { return content_hash(params_); }

  friend bool operator==(const EmotionVector&, const EmotionVector&) = default;

 private:
  ParameterSet params_;
};

EmotionVector extract_vector(const ParameterSet& emo, const ParameterSet& pre, const std::string& label);

// Alpha outside [0, 1.2] is accepted with a warning.
ParameterSet apply_vector(const ParameterSet& target, const EmotionVector& tau, double alpha);

EmotionVector combine(const std::vector<std::pair<EmotionVector, double>>& weighted);

inline constexpr double kNearZero = 1e-8;

struct TensorStats {
  std::string name;
  std::size_t count = 0;
  double l2 = 0.0;
  double max_abs = 0.0;
  double near_zero_fraction = 0.0;

  friend bool operator==(const TensorStats&, const TensorStats&) = default;
};

struct VectorStats {
  std::vector<TensorStats> tensors;
  TensorStats global;

  friend bool operator==(const VectorStats&, const VectorStats&) = default;
};

VectorStats vector_stats(const ParameterSet& set);
inline VectorStats vector_stats(const EmotionVector& tau) { return vector_stats(tau.params()); }

// Shortest decimal form that round-trips the double.
std::string format_double(double v);

}  // namespace emovec
