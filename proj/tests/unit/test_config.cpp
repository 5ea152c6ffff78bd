#include "doctest.h"
#include "emovec/config.hpp"
#include "emovec/hash.hpp"

using namespace emovec;

namespace {

const char* kMinimal = R"(
[corpus]
seed = 1
[embedder]
seed = 2
[pretrain]
init_seed = 3
seed = 4
[finetune]
seed = 5
)";

std::string error_of(const std::string& text) {
  try {
    ExperimentConfig::parse(text, "cfg.toml");
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("toml subset values") {
  const auto j = parse_toml_subset(R"(
# comment
name = "a \"quoted\" # not a comment"
count = 1_000
neg = -3
x = 0.25
y = 1e-3
on = true
list = [1, 2.5, "three", ]   # trailing comma
[t]
k = "v"
[[arr]]
i = 1
[[arr]]
i = 2
)");
  CHECK(j["name"] == "a \"quoted\" # not a comment");
  CHECK(j["count"] == 1000);
  CHECK(j["neg"] == -3);
  CHECK(j["x"] == 0.25);
  CHECK(j["y"] == 1e-3);
  CHECK(j["on"] == true);
  CHECK(j["list"].size() == 3);
  CHECK(j["list"][2] == "three");
  CHECK(j["t"]["k"] == "v");
  CHECK(j["arr"].size() == 2);
  CHECK(j["arr"][1]["i"] == 2);
  CHECK(j["count"].is_number_integer());
  CHECK(j["x"].is_number_float());
}

TEST_CASE("toml subset errors carry the line") {
  auto err = [](const std::string& t) {
    try {
      parse_toml_subset(t, "f");
    } catch (const Error& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(err("a = 1\na = 2").find("f:2") != std::string::npos);
  CHECK(err("a = \"open").find("unterminated") != std::string::npos);
  CHECK(err("a = 1 2").find("unexpected") != std::string::npos);
  CHECK(err("[t]\n[t]").find("twice") != std::string::npos);
  CHECK(err("a = nope").find("invalid") != std::string::npos);
  CHECK(err("= 3").find("key") != std::string::npos);
}

TEST_CASE("minimal config uses defaults and hashes the bytes") {
  const auto c = ExperimentConfig::parse(kMinimal, "cfg.toml");
  CHECK(c.hash == sha256_hex(std::string(kMinimal)));
  CHECK(c.corpus_seed == 1);
  CHECK(c.embedder.seed == 2);
  CHECK(c.init_seed == 3);
  CHECK(c.pretrain.seed == 4);
  CHECK(c.finetune.seed == 5);
  CHECK(c.pretrain.steps == 2000);
  CHECK(c.finetune.steps == 500);
  CHECK(c.corpus == CorpusConfig{});
  CHECK(c.scenarios.empty());
  CHECK(c.output_dir == "out");
}

TEST_CASE("seeds are required") {
  CHECK(error_of("[corpus]\n").find("missing key 'corpus.seed'") != std::string::npos);
  const std::string no_init = "[corpus]\nseed=1\n[embedder]\nseed=2\n[pretrain]\nseed=4\n[finetune]\nseed=5\n";
  CHECK(error_of(no_init).find("pretrain.init_seed") != std::string::npos);
}

TEST_CASE("unknown and mistyped keys are rejected by name") {
  CHECK(error_of(std::string(kMinimal) + "[model]\nhiden = 3\n").find("unknown key 'model.hiden'") != std::string::npos);
  CHECK(error_of(std::string("bogus = 1\n") + kMinimal).find("unknown key 'bogus'") != std::string::npos);
  CHECK(error_of(std::string(kMinimal) + "[[scenario]]\nname = \"x\"\ncase = \"same_spk\"\nalphas = \"0.1\"\n")
            .find("scenario[0].alphas") != std::string::npos);
  CHECK(error_of(std::string("[corpus]\nseed = -1\n")).find("non-negative") != std::string::npos);
}

TEST_CASE("scenarios") {
  const auto c = ExperimentConfig::parse(std::string(kMinimal) + R"(
[[scenario]]
name = "a"
case = "cross_unseen"
[[scenario]]
name = "b"
case = "same_spk"
vector = "single_speaker:e00"
targets = ["e00"]
emotions = ["sad"]
alphas = [0.2, 0.4, 0.8]
sentences_per_target = 5
)",
                                         "cfg");
  REQUIRE(c.scenarios.size() == 2);
  CHECK(c.scenarios[0].scenario_case == ScenarioCase::cross_unseen);
  CHECK(c.scenarios[0].alphas == std::vector<double>{0.1, 0.5, 0.9});
  CHECK(c.scenarios[0].source.scope == VectorScope::speaker_agnostic);
  const auto& b = c.scenarios[1];
  CHECK(b.source.speaker == "e00");
  CHECK(b.targets == std::vector<std::string>{"e00"});
  CHECK(b.emotions == std::vector<Emotion>{Emotion::sad});
  CHECK(b.alphas == std::vector<double>{0.2, 0.4, 0.8});
  CHECK(b.sentences_per_target == 5);

  CHECK(error_of(std::string(kMinimal) + "[[scenario]]\nname=\"a\"\ncase=\"x\"\n").find("unknown scenario case") !=
        std::string::npos);
  CHECK(error_of(std::string(kMinimal) + "[[scenario]]\nname=\"a\"\ncase=\"same_spk\"\n[[scenario]]\nname=\"a\"\ncase=\"same_spk\"\n")
            .find("duplicate scenario") != std::string::npos);
}

TEST_CASE("bundled config parses") {
  const auto c = ExperimentConfig::load(EMOVEC_SOURCE_DIR "/configs/paper_repro.toml");
  CHECK(c.scenarios.size() == 6);
  CHECK(c.corpus.neutral_only_speakers == 8);
  CHECK(c.pretrain.steps == 2000);
  CHECK(c.finetune.steps == 500);
  CHECK_THROWS_AS(ExperimentConfig::load("/nonexistent.toml"), Error);
}
