#include "emovec/config.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "emovec/error.hpp"
#include "emovec/hash.hpp"

namespace emovec {
namespace {

using json = nlohmann::json;

class LineParser {
 public:
  LineParser(std::string_view line, const std::string& where) : s_(line), where_(where) {}

  [[noreturn]] void fail(const std::string& msg) const { throw Error(where_ + ": " + msg); }

  void skip_ws() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
  }
  bool at_end_or_comment() {
    skip_ws();
    return pos_ >= s_.size() || s_[pos_] == '#';
  }
  bool consume(char c) {
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  void expect(char c) {
    if (!consume(c)) fail(std::string("expected '") + c + "'");
  }

  std::string bare_key() {
    skip_ws();
    const std::size_t start = pos_;
    while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_' || s_[pos_] == '-')) ++pos_;
    if (pos_ == start) fail("expected a key");
    return std::string(s_.substr(start, pos_ - start));
  }

  json value() {
    skip_ws();
    if (pos_ >= s_.size()) fail("missing value");
    const char c = s_[pos_];
    if (c == '"') return string_value();
    if (c == '[') {
      ++pos_;
      json arr = json::array();
      while (!consume(']')) {
        arr.push_back(value());
        if (!consume(',')) {
          expect(']');
          break;
        }
      }
      return arr;
    }
    const std::size_t start = pos_;
    while (pos_ < s_.size() && s_[pos_] != ',' && s_[pos_] != ']' && s_[pos_] != '#' && s_[pos_] != ' ' &&
           s_[pos_] != '\t')
      ++pos_;
    std::string tok(s_.substr(start, pos_ - start));
    if (tok == "true") return true;
    if (tok == "false") return false;
    std::string digits;
    for (char ch : tok)
      if (ch != '_') digits.push_back(ch);
    if (!digits.empty() && digits.find_first_of(".eE") == std::string::npos && digits != "inf" && digits != "nan") {
      std::int64_t v = 0;
      const char* b = digits.data() + (digits[0] == '+' ? 1 : 0);
      auto [end, ec] = std::from_chars(b, digits.data() + digits.size(), v);
      if (ec == std::errc() && end == digits.data() + digits.size()) return v;
      fail("invalid integer '" + tok + "'");
    }
    double d = 0.0;
    const char* b = digits.data() + (!digits.empty() && digits[0] == '+' ? 1 : 0);
    auto [end, ec] = std::from_chars(b, digits.data() + digits.size(), d);
    if (digits.empty() || ec != std::errc() || end != digits.data() + digits.size()) fail("invalid value '" + tok + "'");
    return d;
  }

 private:
  json string_value() {
    ++pos_;
    std::string out;
    while (pos_ < s_.size() && s_[pos_] != '"') {
      char c = s_[pos_++];
      if (c == '\\') {
        if (pos_ >= s_.size()) break;
        const char e = s_[pos_++];
        switch (e) {
          case 'n': out.push_back('\n'); break;
          case 't': out.push_back('\t'); break;
          case '"': out.push_back('"'); break;
          case '\\': out.push_back('\\'); break;
          default: fail(std::string("unsupported escape '\\") + e + "'");
        }
      } else {
        out.push_back(c);
      }
    }
    if (pos_ >= s_.size()) fail("unterminated string");
    ++pos_;
    return out;
  }

  std::string_view s_;
  std::string where_;
  std::size_t pos_ = 0;
};

// Typed access to one table, tracking which keys were read so leftovers
// can be reported as unknown.
class Table {
 public:
  Table(const json& j, std::string path, std::string origin) : j_(j), path_(std::move(path)), origin_(std::move(origin)) {
    if (!j_.is_object()) throw Error(origin_ + ": '" + path_ + "' must be a table");
  }

  bool has(const std::string& key) {
    used_.insert(key);
    return j_.contains(key);
  }

  template <typename T>
  T get(const std::string& key, T fallback) {
    if (!has(key)) return fallback;
    return convert<T>(key);
  }

  template <typename T>
  T require(const std::string& key) {
    if (!has(key)) throw Error(origin_ + ": missing key '" + full(key) + "'");
    return convert<T>(key);
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!used_.count(k)) throw Error(origin_ + ": unknown key '" + full(k) + "'");
    }
  }

 private:
  std::string full(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  template <typename T>
  T convert(const std::string& key) {
    const json& v = j_.at(key);
    auto bad = [&](const char* want) { return Error(origin_ + ": key '" + full(key) + "' must be " + want); };
    if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw bad("a string");
      return v.get<std::string>();
    } else if constexpr (std::is_same_v<T, double>) {
      if (!v.is_number()) throw bad("a number");
      return v.get<double>();
    } else if constexpr (std::is_same_v<T, std::uint64_t>) {
      if (!v.is_number_integer() || v.get<std::int64_t>() < 0) throw bad("a non-negative integer");
      return v.get<std::uint64_t>();
    } else if constexpr (std::is_same_v<T, int>) {
      if (!v.is_number_integer()) throw bad("an integer");
      return v.get<int>();
    } else if constexpr (std::is_same_v<T, std::vector<std::string>>) {
      if (!v.is_array()) throw bad("an array of strings");
      std::vector<std::string> out;
      for (const auto& x : v) {
        if (!x.is_string()) throw bad("an array of strings");
        out.push_back(x.get<std::string>());
      }
      return out;
    } else if constexpr (std::is_same_v<T, std::vector<double>>) {
      if (!v.is_array()) throw bad("an array of numbers");
      std::vector<double> out;
      for (const auto& x : v) {
        if (!x.is_number()) throw bad("an array of numbers");
        out.push_back(x.get<double>());
      }
      return out;
    } else {
      static_assert(sizeof(T) == 0, "unsupported config type");
    }
  }

  const json& j_;
  std::string path_;
  std::string origin_;
  std::set<std::string> used_;
};

std::vector<Emotion> parse_emotions(const std::vector<std::string>& names, const std::string& origin,
                                    const std::string& key) {
  std::vector<Emotion> out;
  for (const auto& n : names) {
    try {
      out.push_back(parse_emotion(n));
    } catch (const Error& e) {
      throw Error(origin + ": key '" + key + "': " + e.what());
    }
  }
  return out;
}

PhaseConfig read_phase(Table& t, PhaseConfig d) {
  d.steps = t.get("steps", d.steps);
  d.learning_rate = t.get("learning_rate", d.learning_rate);
  d.momentum = t.get("momentum", d.momentum);
  d.batch_size = t.get("batch_size", d.batch_size);
  d.seed = t.require<std::uint64_t>("seed");
  return d;
}

}  // namespace

nlohmann::json parse_toml_subset(const std::string& text, const std::string& origin) {
  json root = json::object();
  json* current = &root;
  std::set<std::string> defined_tables;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    LineParser p(line, origin + ":" + std::to_string(lineno));
    if (p.at_end_or_comment()) continue;
    if (p.consume('[')) {
      const bool array = p.consume('[');
      const std::string name = p.bare_key();
      p.expect(']');
      if (array) p.expect(']');
      if (!p.at_end_or_comment()) p.fail("unexpected text after table header");
      if (array) {
        json& arr = root[name];
        if (arr.is_null()) arr = json::array();
        if (!arr.is_array()) p.fail("'" + name + "' is already a table");
        arr.push_back(json::object());
        current = &arr.back();
      } else {
        if (!defined_tables.insert(name).second || root.contains(name)) p.fail("table '" + name + "' defined twice");
        root[name] = json::object();
        current = &root[name];
      }
      continue;
    }
    const std::string key = p.bare_key();
    p.expect('=');
    json v = p.value();
    if (!p.at_end_or_comment()) p.fail("unexpected text after value of '" + key + "'");
    if (current->contains(key)) p.fail("duplicate key '" + key + "'");
    (*current)[key] = std::move(v);
  }
  return root;
}

ExperimentConfig ExperimentConfig::parse(const std::string& text, const std::string& origin) {
  const json doc = parse_toml_subset(text, origin);
  ExperimentConfig cfg;
  cfg.origin = origin;
  cfg.hash = sha256_hex(text);

  Table root(doc, "", origin);
  cfg.output_dir = root.get<std::string>("output_dir", cfg.output_dir.string());

  static const json empty = json::object();
  auto table = [&](const char* name) -> const json& { return root.has(name) ? doc.at(name) : empty; };

  {
    Table t(table("corpus"), "corpus", origin);
    auto& c = cfg.corpus;
    cfg.corpus_seed = t.require<std::uint64_t>("seed");
    c.neutral_only_speakers = t.get("neutral_only_speakers", c.neutral_only_speakers);
    c.emotional_speakers = t.get("emotional_speakers", c.emotional_speakers);
    c.unseen_speakers = t.get("unseen_speakers", c.unseen_speakers);
    c.utterances_per_style = t.get("utterances_per_style", c.utterances_per_style);
    c.min_length = t.get("min_length", c.min_length);
    c.max_length = t.get("max_length", c.max_length);
    c.noise_sigma = t.get("noise_sigma", c.noise_sigma);
    c.emotion_intensity = t.get("emotion_intensity", c.emotion_intensity);
    c.train_fraction = t.get("train_fraction", c.train_fraction);
    c.val_fraction = t.get("val_fraction", c.val_fraction);
    if (t.has("emotions")) {
      c.emotions = parse_emotions(t.require<std::vector<std::string>>("emotions"), origin, "corpus.emotions");
    }
    t.finish();
    try {
      c.validate();
    } catch (const Error& e) {
      throw Error(origin + ": [corpus] " + e.what());
    }
  }
  {
    Table t(table("model"), "model", origin);
    cfg.model.embed_dim = static_cast<std::size_t>(t.get("embed_dim", static_cast<int>(cfg.model.embed_dim)));
    cfg.model.hidden = static_cast<std::size_t>(t.get("hidden", static_cast<int>(cfg.model.hidden)));
    t.finish();
    try {
      cfg.model.validate();
    } catch (const Error& e) {
      throw Error(origin + ": [model] " + e.what());
    }
  }
  {
    Table t(table("embedder"), "embedder", origin);
    auto& h = cfg.embedder;
    h.steps = t.get("steps", h.steps);
    h.batch_size = t.get("batch_size", h.batch_size);
    h.learning_rate = t.get("learning_rate", h.learning_rate);
    h.momentum = t.get("momentum", h.momentum);
    h.seed = t.require<std::uint64_t>("seed");
    t.finish();
  }
  {
    Table t(table("pretrain"), "pretrain", origin);
    cfg.init_seed = t.require<std::uint64_t>("init_seed");
    cfg.pretrain = read_phase(t, cfg.pretrain);
    t.finish();
  }
  {
    Table t(table("finetune"), "finetune", origin);
    cfg.finetune = read_phase(t, cfg.finetune);
    t.finish();
  }
  for (const PhaseConfig* p : {&cfg.pretrain, &cfg.finetune}) {
    if (p->steps < 0 || p->batch_size <= 0 || !(p->learning_rate > 0.0)) {
      throw Error(origin + ": training phases need steps >= 0, batch_size > 0 and learning_rate > 0");
    }
  }

  if (root.has("scenario")) {
    const json& list = doc.at("scenario");
    if (!list.is_array()) throw Error(origin + ": 'scenario' must be an array of tables ([[scenario]])");
    std::set<std::string> names;
    for (std::size_t i = 0; i < list.size(); ++i) {
      const std::string path = "scenario[" + std::to_string(i) + "]";
      Table t(list[i], path, origin);
      ScenarioSpec s;
      s.name = t.require<std::string>("name");
      if (!names.insert(s.name).second) throw Error(origin + ": duplicate scenario name '" + s.name + "'");
      try {
        s.scenario_case = parse_scenario_case(t.require<std::string>("case"));
        s.source = VectorSource::parse(t.get<std::string>("vector", "speaker_agnostic"));
      } catch (const Error& e) {
        throw Error(origin + ": " + path + ": " + e.what());
      }
      s.targets = t.get("targets", s.targets);
      if (t.has("emotions")) {
        s.emotions = parse_emotions(t.require<std::vector<std::string>>("emotions"), origin, path + ".emotions");
      }
      s.alphas = t.get("alphas", s.alphas);
      s.sentences_per_target = t.get("sentences_per_target", s.sentences_per_target);
      s.secs_alpha = t.get("secs_alpha", s.secs_alpha);
      t.finish();
      cfg.scenarios.push_back(std::move(s));
    }
  }
  root.finish();
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

}  // namespace emovec
