#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

namespace emovec {

inline constexpr std::size_t kVocabSize = 32;
inline constexpr std::size_t kEnvelopeDim = 8;
// [log-duration, log-F0, log-energy, envelope x 8]
inline constexpr std::size_t kFeatureDim = 3 + kEnvelopeDim;
inline constexpr std::size_t kSpeakerDim = 16;

namespace feature_index {
inline constexpr std::size_t log_duration = 0;
inline constexpr std::size_t log_f0 = 1;
inline constexpr std::size_t log_energy = 2;
inline constexpr std::size_t envelope = 3;
}  // namespace feature_index

using Frame = std::array<double, kFeatureDim>;
using Frames = std::vector<Frame>;

// x-vector analogue. `normalized` is true when the L2 norm is 1 within 1e-6.
struct SpeakerEmbedding {
  std::vector<double> values;
  bool normalized = false;

  friend bool operator==(const SpeakerEmbedding&, const SpeakerEmbedding&) = default;
};

// Conditioning vector per speaker id. `source` records which split the
// neutral speech came from ("train" for seen speakers, "reference" for
// unseen speakers), so unseen targets can be checked against leakage.
struct SpeakerVectorEntry {
  SpeakerEmbedding embedding;
  std::string source;

  friend bool operator==(const SpeakerVectorEntry&, const SpeakerVectorEntry&) = default;
};

using SpeakerVectorTable = std::map<std::string, SpeakerVectorEntry>;

}  // namespace emovec
