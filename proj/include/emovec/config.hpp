#pragma once

// Experiment configuration. The file format is the TOML subset needed
// here: [table] and [[array-of-tables]] headers, bare keys, and values
// that are strings, integers, floats, booleans or one-line arrays of them.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "emovec/acoustic_model.hpp"
#include "emovec/eval_harness.hpp"
#include "emovec/speaker_embed.hpp"
#include "emovec/synth_data.hpp"
#include "json.hpp"

namespace emovec {

// Parses the subset into a JSON object; `origin` prefixes error messages.
nlohmann::json parse_toml_subset(const std::string& text, const std::string& origin = "config");

struct PhaseConfig {
  int steps = 0;
  double learning_rate = 0.01;
  double momentum = 0.9;
  int batch_size = 32;
  std::uint64_t seed = 0;

  friend bool operator==(const PhaseConfig&, const PhaseConfig&) = default;
};

struct ExperimentConfig {
  std::string origin;
  std::string hash;  // SHA-256 of the config file bytes
  std::filesystem::path output_dir = "out";

  CorpusConfig corpus;
  std::uint64_t corpus_seed = 0;
  ModelConfig model;
  EmbedderHyper embedder;
  std::uint64_t init_seed = 0;
  PhaseConfig pretrain{2000, 0.01, 0.9, 32, 0};
  PhaseConfig finetune{500, 0.01, 0.9, 32, 0};
  std::vector<ScenarioSpec> scenarios;

  // Seeds are required; other keys fall back to the defaults above.
  // Unknown keys are rejected.
  static ExperimentConfig parse(const std::string& text, const std::string& origin = "config");
  static ExperimentConfig load(const std::filesystem::path& path);
};

}  // namespace emovec
