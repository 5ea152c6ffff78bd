// emovec: command-line driver for the emotion-vector toolkit.
// Logs go to stderr; every result is written to a file.
// Exit codes: 0 success, 1 validation error, 2 I/O error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "emovec/config.hpp"
#include "emovec/error.hpp"
#include "emovec/eval_harness.hpp"
#include "emovec/log.hpp"
#include "emovec/pipeline.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace emovec;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
}

void require_file(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorKind::io, "no such file: " + path.string());
}

std::vector<int> parse_tokens(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error("--tokens: '" + item + "' is not an integer");
    }
  }
  if (out.empty()) throw Error("--tokens: empty token list");
  return out;
}

struct FrameRecord {
  std::string id;
  std::string speaker;
  std::vector<int> tokens;
  Frames frames;
};

void write_frames(const fs::path& path, const std::vector<FrameRecord>& records, const MetaMap& meta) {
  std::string text;
  for (const auto& r : records) {
    json j = {{"id", r.id}, {"speaker", r.speaker}, {"tokens", r.tokens}, {"features", r.frames}, {"meta", meta}};
    text += j.dump() + "\n";
  }
  write_text(path, text);
}

std::vector<FrameRecord> read_frames(const fs::path& path) {
  require_file(path);
  std::ifstream in(path, std::ios::binary);
  std::vector<FrameRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      out.push_back({j.at("id").get<std::string>(), j.at("speaker").get<std::string>(),
                     j.at("tokens").get<std::vector<int>>(), j.at("features").get<Frames>()});
    } catch (const json::exception& e) {
      throw Error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::vector<Frames> frames_only(const std::vector<FrameRecord>& records) {
  std::vector<Frames> out;
  for (const auto& r : records) out.push_back(r.frames);
  return out;
}

// Pipeline stages share --config and --out.
struct StageOptions {
  std::string config;
  std::string out;

  void add(CLI::App* cmd) {
    cmd->add_option("--config", config, "experiment config file")->required();
    cmd->add_option("--out", out, "output directory (default: output_dir from the config)");
  }
  Pipeline make() const {
    require_file(config);
    auto cfg = ExperimentConfig::load(config);
    fs::path root = out.empty() ? cfg.output_dir : fs::path(out);
    return Pipeline(std::move(cfg), root);
  }
};

json stats_json(const TensorStats& t) {
  return {{"name", t.name}, {"count", t.count}, {"l2", t.l2}, {"max_abs", t.max_abs},
          {"near_zero_fraction", t.near_zero_fraction}};
}

int run(int argc, char** argv) {
  CLI::App app{"emotion-vector task arithmetic on a toy multi-speaker acoustic model"};
  app.require_subcommand(1);

  StageOptions stage;
  auto* dataset_gen = app.add_subcommand("dataset-gen", "generate the synthetic corpus");
  stage.add(dataset_gen);

  auto* train_emb = app.add_subcommand("train-embedder", "train the speaker embedder and write speaker vectors");
  stage.add(train_emb);

  auto* pretrain_cmd = app.add_subcommand("pretrain", "train the multi-speaker model on neutral speech");
  stage.add(pretrain_cmd);

  std::string emotion;
  auto* finetune_cmd = app.add_subcommand("finetune", "fine-tune the pretrained model on one emotion");
  stage.add(finetune_cmd);
  finetune_cmd->add_option("--emotion", emotion, "angry, sad or happy")->required();

  std::string emo_path, pre_path, label, out_path;
  auto* extract_cmd = app.add_subcommand("extract-vector", "emotion vector = fine-tuned - pretrained");
  extract_cmd->add_option("--emo", emo_path, "fine-tuned checkpoint")->required();
  extract_cmd->add_option("--pre", pre_path, "pretrained checkpoint")->required();
  extract_cmd->add_option("--label", label, "emotion label")->required();
  extract_cmd->add_option("-o,--output", out_path, "output vector file")->required();

  std::string target_path, vector_path;
  double alpha = 0.0;
  auto* apply_cmd = app.add_subcommand("apply", "target + alpha * vector");
  apply_cmd->add_option("--target", target_path, "target checkpoint")->required();
  apply_cmd->add_option("--vector", vector_path, "emotion vector")->required();
  apply_cmd->add_option("--alpha", alpha, "scaling factor")->required();
  apply_cmd->add_option("-o,--output", out_path, "output checkpoint")->required();

  std::string model_path, speakers_path, speaker_id, tokens, corpus_dir, split = "test";
  int limit = 10;
  auto* synth_cmd = app.add_subcommand("synth", "synthesize feature frames");
  synth_cmd->add_option("--model", model_path, "acoustic model checkpoint")->required();
  synth_cmd->add_option("--speakers", speakers_path, "speaker_vectors.json")->required();
  synth_cmd->add_option("--speaker", speaker_id, "conditioning speaker id")->required();
  auto* tokens_opt = synth_cmd->add_option("--tokens", tokens, "comma-separated token ids");
  auto* corpus_opt = synth_cmd->add_option("--corpus", corpus_dir, "take sentences from this corpus");
  tokens_opt->excludes(corpus_opt);
  synth_cmd->add_option("--split", split, "corpus split (train, val, test)");
  synth_cmd->add_option("--limit", limit, "number of corpus sentences");
  synth_cmd->add_option("-o,--output", out_path, "output frames (.jsonl)")->required();

  std::string emotional_path, neutral_path, embedder_path;
  auto* secs_cmd = app.add_subcommand("eval-secs", "speaker similarity between two synthesized sets");
  secs_cmd->add_option("--emotional", emotional_path, "frames from the edited model")->required();
  secs_cmd->add_option("--neutral", neutral_path, "frames from the unedited model")->required();
  secs_cmd->add_option("--embedder", embedder_path, "embedder checkpoint")->required();
  secs_cmd->add_option("-o,--output", out_path, "output JSON")->required();

  std::vector<std::string> synth_paths;
  std::vector<double> alphas;
  auto* intensity_cmd = app.add_subcommand("eval-intensity", "intensity ordering confusion matrix");
  intensity_cmd->add_option("--corpus", corpus_dir, "corpus directory (for the estimator)")->required();
  intensity_cmd->add_option("--emotion", emotion, "angry, sad or happy")->required();
  intensity_cmd->add_option("--synth", synth_paths, "frames per alpha, in --alphas order")->required();
  intensity_cmd->add_option("--alphas", alphas, "the three alpha values")->required()->delimiter(',');
  intensity_cmd->add_option("--neutral", neutral_path, "frames from the unedited model")->required();
  intensity_cmd->add_option("-o,--output", out_path, "output JSON")->required();

  std::string case_name;
  auto* scenario_cmd = app.add_subcommand("run-scenario", "run configured scenarios end to end");
  stage.add(scenario_cmd);
  scenario_cmd->add_option("--case", case_name, "only scenarios of this case");

  std::string inspect_path;
  bool with_stats = false;
  auto* inspect_cmd = app.add_subcommand("inspect", "print a checkpoint's header");
  inspect_cmd->add_option("file", inspect_path, "checkpoint")->required();
  inspect_cmd->add_flag("--stats", with_stats, "include per-tensor statistics");
  inspect_cmd->add_option("-o,--output", out_path, "write to a file instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  if (dataset_gen->parsed()) {
    auto p = stage.make();
    p.rebuild_corpus();
    log_info("corpus written to " + (p.root() / "corpus").string());
  } else if (train_emb->parsed()) {
    auto p = stage.make();
    p.rebuild_embedder();
    p.speaker_table();
    log_info("wrote " + p.embedder_path().string() + " and " + p.speaker_table_path().string());
  } else if (pretrain_cmd->parsed()) {
    auto p = stage.make();
    p.rebuild_pretrained();
    log_info("wrote " + p.checkpoint_path("pretrain.evc").string());
  } else if (finetune_cmd->parsed()) {
    auto p = stage.make();
    const Emotion e = parse_emotion(emotion);
    p.rebuild_finetuned(e);
    p.vector(e);
    log_info("wrote " + p.checkpoint_path("ft_" + emotion + ".evc").string());
  } else if (extract_cmd->parsed()) {
    const auto tau = extract_vector(load(emo_path), load(pre_path), label);
    save(tau.params(), out_path);
    log_info("vector " + tau.hash().substr(0, 16) + " (" + std::string(to_string(tau.scope())) + ") -> " + out_path);
  } else if (apply_cmd->parsed()) {
    const EmotionVector tau(load(vector_path));
    save(apply_vector(load(target_path), tau, alpha), out_path);
    log_info("merged checkpoint -> " + out_path);
  } else if (synth_cmd->parsed()) {
    const ParameterSet model = load(model_path);
    require_file(speakers_path);
    const auto table = read_speaker_table(speakers_path);
    auto it = table.find(speaker_id);
    if (it == table.end()) throw Error("speaker '" + speaker_id + "' is not in " + speakers_path);
    std::vector<FrameRecord> records;
    if (!tokens.empty()) {
      records.push_back({"tokens", speaker_id, parse_tokens(tokens), {}});
    } else if (!corpus_dir.empty()) {
      const Corpus c = read_corpus(corpus_dir);
      const std::vector<Utterance>* pool = split == "train" ? &c.train : split == "val" ? &c.val
                                         : split == "test" ? &c.test : nullptr;
      if (!pool) throw Error("--split must be train, val or test");
      // Sentences of the conditioning speaker when it has any, otherwise of anyone.
      auto utts = select(*pool, speaker_id, Emotion::neutral);
      if (utts.empty()) utts = select(*pool, std::nullopt, Emotion::neutral);
      for (const auto* u : utts) {
        if (static_cast<int>(records.size()) >= limit) break;
        records.push_back({u->id, speaker_id, u->tokens, {}});
      }
    } else {
      throw Error("synth needs --tokens or --corpus");
    }
    const DenseParams w = DenseParams::from_params(model, ModelConfig::infer(model));
    for (auto& r : records) r.frames = forward(w, r.tokens, it->second.embedding.values);
    write_frames(out_path, records, {{"model_hash", content_hash(model)}, {"speaker", speaker_id}});
    log_info(std::to_string(records.size()) + " sentences -> " + out_path);
  } else if (secs_cmd->parsed()) {
    const auto emo = read_frames(emotional_path);
    const auto neu = read_frames(neutral_path);
    const auto embedder = EmbedderModel::from_params(load(embedder_path));
    const auto s = secs_eval(frames_only(emo), frames_only(neu), embedder);
    json j = {{"per_sentence", s.per_sentence}, {"mean", s.mean}, {"half_width", s.half_width}};
    write_text(out_path, j.dump(2) + "\n");
    log_info("SECS " + format_double(s.mean) + " +/- " + format_double(s.half_width));
  } else if (intensity_cmd->parsed()) {
    if (synth_paths.size() != alphas.size()) throw Error("--synth must be given once per alpha");
    const Corpus c = read_corpus(corpus_dir);
    const auto est = IntensityEstimator::from_corpus(c);
    std::vector<std::vector<Frames>> synth;
    for (const auto& p : synth_paths) synth.push_back(frames_only(read_frames(p)));
    const auto cm = intensity_ordering_eval(synth, alphas, parse_emotion(emotion), est, frames_only(read_frames(neutral_path)));
    json rows = json::array();
    for (const auto& r : cm.rates) rows.push_back(r);
    json j = {{"rates", rows}, {"mean_diagonal", cm.mean_diagonal}, {"monotonic_fraction", cm.monotonic_fraction},
              {"sentences", cm.sentences}};
    write_text(out_path, j.dump(2) + "\n");
    log_info("mean diagonal " + format_double(cm.mean_diagonal));
  } else if (scenario_cmd->parsed()) {
    auto p = stage.make();
    std::optional<ScenarioCase> only;
    if (!case_name.empty()) only = parse_scenario_case(case_name);
    const auto reports = p.run_all(only);
    if (reports.empty()) throw Error("no configured scenario matches case '" + case_name + "'");
    for (const auto& r : reports) log_info("report -> " + p.report_dir(r.name).string());
  } else if (inspect_cmd->parsed()) {
    const ParameterSet set = load(inspect_path);
    json tensors = json::array();
    for (const auto& [name, t] : set.tensors()) tensors.push_back({{"name", name}, {"shape", t.shape()}});
    json j = {{"file", inspect_path}, {"content_hash", content_hash(set)}, {"meta", set.meta()}, {"tensors", tensors}};
    if (with_stats) {
      const auto st = vector_stats(set);
      json per = json::array();
      for (const auto& t : st.tensors) per.push_back(stats_json(t));
      j["stats"] = {{"global", stats_json(st.global)}, {"tensors", per}};
    }
    if (out_path.empty()) {
      std::cout << j.dump(2) << "\n";
    } else {
      write_text(out_path, j.dump(2) + "\n");
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const Error& e) {
    std::cerr << "emovec: error: " << e.what() << "\n";
    return e.kind() == ErrorKind::io ? 2 : 1;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "emovec: error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "emovec: error: " << e.what() << "\n";
    return 1;
  }
}
