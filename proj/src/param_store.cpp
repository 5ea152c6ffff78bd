#include "emovec/param_store.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"

#include "emovec/hash.hpp"

namespace emovec {
namespace {

using nlohmann::json;

constexpr std::array<char, 4> kMagic{'E', 'V', 'C', '1'};
constexpr int kVersion = 1;

const std::set<std::string, std::less<>> kRoles{"pretrained", "finetuned", "merged", "vector", "embedder"};
const std::set<std::string, std::less<>> kScopes{"single", "multi", "single-speaker", "speaker-agnostic"};
const std::set<std::string, std::less<>> kEmotions{"angry", "sad", "happy", "neutral"};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

[[noreturn]] void fail(CheckpointErrc code, const std::string& what) { throw CheckpointError(code, what); }

void validate_meta(const MetaMap& meta) {
  if (auto it = meta.find(meta_keys::role); it != meta.end() && !kRoles.contains(it->second)) {
    fail(CheckpointErrc::invalid_meta, "meta.role has unknown value '" + it->second + "'");
  }
  if (auto it = meta.find(meta_keys::scope); it != meta.end() && !kScopes.contains(it->second)) {
    fail(CheckpointErrc::invalid_meta, "meta.scope has unknown value '" + it->second + "'");
  }
  if (auto it = meta.find(meta_keys::emotion); it != meta.end()) {
    // Combined vectors carry labels joined with '+'.
    std::string_view rest = it->second;
    while (true) {
      const auto plus = rest.find('+');
      const auto part = rest.substr(0, plus);
      if (!kEmotions.contains(part)) {
        fail(CheckpointErrc::invalid_meta, "meta.emotion has unknown label '" + std::string(part) + "'");
      }
      if (plus == std::string_view::npos) break;
      rest.remove_prefix(plus + 1);
    }
  }
}

}  // namespace

std::size_t shape_elements(std::span<const std::size_t> shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(std::span<const std::size_t> shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

TensorEntry::TensorEntry(std::string name, Shape shape, std::vector<float> data)
    : name_(std::move(name)), shape_(std::move(shape)), data_(std::move(data)) {
  if (name_.empty()) throw Error("tensor name must be non-empty");
  if (std::any_of(shape_.begin(), shape_.end(), [](std::size_t d) { return d == 0; })) {
    throw Error("tensor '" + name_ + "' has a zero dimension in shape " + shape_string(shape_));
  }
  if (data_.size() != shape_elements(shape_)) {
    throw Error("tensor '" + name_ + "' has " + std::to_string(data_.size()) + " values but shape " +
                shape_string(shape_) + " needs " + std::to_string(shape_elements(shape_)));
  }
}

TensorEntry::TensorEntry(std::string name, Shape shape)
    : TensorEntry(std::move(name), shape, std::vector<float>(shape_elements(shape), 0.0f)) {}

bool TensorEntry::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

bool operator==(const TensorEntry& a, const TensorEntry& b) {
  return a.name_ == b.name_ && a.shape_ == b.shape_ && a.data_.size() == b.data_.size() &&
         std::memcmp(a.data_.data(), b.data_.data(), a.data_.size() * sizeof(float)) == 0;
}

ParameterSet::ParameterSet(std::vector<TensorEntry> tensors, MetaMap meta) : meta_(std::move(meta)) {
  for (auto& t : tensors) insert(std::move(t));
}

void ParameterSet::insert(TensorEntry tensor) {
  const std::string name = tensor.name();
  if (!tensors_.emplace(name, std::move(tensor)).second) {
    fail(CheckpointErrc::duplicate_name, "duplicate tensor name '" + name + "'");
  }
}

const TensorEntry& ParameterSet::at(std::string_view name) const {
  if (const auto* t = find(name)) return *t;
  throw Error("no tensor named '" + std::string(name) + "'");
}

TensorEntry& ParameterSet::at(std::string_view name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw Error("no tensor named '" + std::string(name) + "'");
  return it->second;
}

const TensorEntry* ParameterSet::find(std::string_view name) const {
  auto it = tensors_.find(name);
  return it == tensors_.end() ? nullptr : &it->second;
}

std::size_t ParameterSet::total_elements() const {
  std::size_t n = 0;
  for (const auto& [_, t] : tensors_) n += t.size();
  return n;
}

std::optional<std::string> ParameterSet::meta_value(std::string_view key) const {
  auto it = meta_.find(std::string(key));
  if (it == meta_.end()) return std::nullopt;
  return it->second;
}

void ParameterSet::validate() const {
  if (!allow_nonfinite_) {
    for (const auto& [name, t] : tensors_) {
      if (!t.all_finite()) fail(CheckpointErrc::nonfinite, "tensor '" + name + "' contains NaN or Inf");
    }
  }
  validate_meta(meta_);
}

bool operator==(const ParameterSet& a, const ParameterSet& b) {
  return a.allow_nonfinite_ == b.allow_nonfinite_ && a.meta_ == b.meta_ && a.tensors_ == b.tensors_;
}

std::string_view to_string(CheckpointErrc code) {
  switch (code) {
    case CheckpointErrc::io: return "io";
    case CheckpointErrc::bad_magic: return "bad_magic";
    case CheckpointErrc::header_length: return "header_length";
    case CheckpointErrc::bad_header: return "bad_header";
    case CheckpointErrc::payload_length: return "payload_length";
    case CheckpointErrc::duplicate_name: return "duplicate_name";
    case CheckpointErrc::descriptor_mismatch: return "descriptor_mismatch";
    case CheckpointErrc::nonfinite: return "nonfinite";
    case CheckpointErrc::invalid_meta: return "invalid_meta";
  }
  return "unknown";
}

CheckpointError::CheckpointError(CheckpointErrc code, const std::string& what)
    : Error(code == CheckpointErrc::io ? ErrorKind::io : ErrorKind::validation,
            "checkpoint " + std::string(to_string(code)) + ": " + what),
      code_(code),
      detail_(what) {}

std::vector<std::uint8_t> encode_checkpoint(const ParameterSet& set) {
  set.validate();

  json descriptors = json::array();
  std::size_t offset = 0;
  for (const auto& [name, t] : set.tensors()) {
    const std::size_t nbytes = 4 * t.size();
    descriptors.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}, {"nbytes", nbytes}});
    offset += nbytes;
  }
  json header = {{"version", kVersion}, {"dtype", "f32"}, {"tensors", descriptors}, {"meta", set.meta()}};
  if (set.allow_nonfinite()) header["allow_nonfinite"] = true;
  const std::string text = header.dump();
  if (text.size() > UINT32_MAX) fail(CheckpointErrc::header_length, "header exceeds 4 GiB");

  std::vector<std::uint8_t> out;
  out.reserve(8 + text.size() + offset);
  out.insert(out.end(), kMagic.begin(), kMagic.end());
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& [_, t] : set.tensors()) {
    for (float v : t.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

ParameterSet decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kMagic.size() || !std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    fail(CheckpointErrc::bad_magic, "file does not start with \"EVC1\"");
  }
  if (bytes.size() < 8) fail(CheckpointErrc::header_length, "file too short for header length field");
  const std::size_t header_len = get_u32(bytes.data() + 4);
  if (header_len > bytes.size() - 8) {
    fail(CheckpointErrc::header_length, "header length " + std::to_string(header_len) + " exceeds file size " +
                                            std::to_string(bytes.size()));
  }

  json header;
  try {
    header = json::parse(bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(header_len));
  } catch (const json::parse_error& e) {
    fail(CheckpointErrc::bad_header, std::string("header is not valid JSON: ") + e.what());
  }

  ParameterSet set;
  std::vector<TensorEntry> entries;
  std::size_t expected_payload = 0;
  try {
    if (header.at("version").get<int>() != kVersion) fail(CheckpointErrc::bad_header, "unsupported version");
    if (header.at("dtype").get<std::string>() != "f32") fail(CheckpointErrc::bad_header, "dtype must be f32");
    for (const auto& [k, v] : header.at("meta").items()) set.set_meta(k, v.get<std::string>());
    if (header.contains("allow_nonfinite")) set.set_allow_nonfinite(header.at("allow_nonfinite").get<bool>());

    const std::span<const std::uint8_t> payload = bytes.subspan(8 + header_len);
    std::set<std::string, std::less<>> seen;
    std::string previous;
    for (const auto& d : header.at("tensors")) {
      auto name = d.at("name").get<std::string>();
      auto shape = d.at("shape").get<Shape>();
      const auto offset = d.at("offset").get<std::size_t>();
      const auto nbytes = d.at("nbytes").get<std::size_t>();
      if (!seen.insert(name).second) fail(CheckpointErrc::duplicate_name, "duplicate tensor name '" + name + "'");
      if (!previous.empty() && name < previous) {
        fail(CheckpointErrc::descriptor_mismatch, "descriptors not sorted by name at '" + name + "'");
      }
      if (nbytes != 4 * shape_elements(shape)) {
        fail(CheckpointErrc::descriptor_mismatch, "tensor '" + name + "' nbytes " + std::to_string(nbytes) +
                                                      " does not match shape " + shape_string(shape));
      }
      if (offset != expected_payload) {
        fail(CheckpointErrc::descriptor_mismatch, "tensor '" + name + "' offset " + std::to_string(offset) +
                                                      " is not contiguous (expected " +
                                                      std::to_string(expected_payload) + ")");
      }
      expected_payload += nbytes;
      if (expected_payload > payload.size()) {
        fail(CheckpointErrc::payload_length, "payload has " + std::to_string(payload.size()) +
                                                 " bytes, tensor '" + name + "' ends at " +
                                                 std::to_string(expected_payload));
      }
      std::vector<float> data(nbytes / 4);
      for (std::size_t i = 0; i < data.size(); ++i) data[i] = std::bit_cast<float>(get_u32(&payload[offset + 4 * i]));
      entries.emplace_back(std::move(name), std::move(shape), std::move(data));
      previous = entries.back().name();
    }
    if (expected_payload != payload.size()) {
      fail(CheckpointErrc::payload_length, "payload has " + std::to_string(payload.size()) +
                                               " bytes, descriptors cover " + std::to_string(expected_payload));
    }
  } catch (const json::exception& e) {
    fail(CheckpointErrc::bad_header, std::string("malformed header: ") + e.what());
  } catch (const CheckpointError&) {
    throw;
  } catch (const Error& e) {
    fail(CheckpointErrc::descriptor_mismatch, e.what());
  }
  for (auto& e : entries) set.insert(std::move(e));
  set.validate();
  return set;
}

void save(const ParameterSet& set, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(set);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(CheckpointErrc::io, "cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(CheckpointErrc::io, "write to '" + path.string() + "' failed");
}

ParameterSet load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(CheckpointErrc::io, "cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) fail(CheckpointErrc::io, "read from '" + path.string() + "' failed");
  try {
    return decode_checkpoint(bytes);
  } catch (const CheckpointError& e) {
    throw CheckpointError(e.code(), path.string() + ": " + e.detail());
  }
}

std::string content_hash(const ParameterSet& set) { return sha256_hex(encode_checkpoint(set)); }

std::string CompatibilityReport::describe() const {
  if (compatible()) return "compatible";
  std::ostringstream os;
  const auto list = [&os](const char* label, const std::vector<std::string>& names) {
    if (names.empty()) return;
    os << label << ":";
    for (const auto& n : names) os << " " << n;
    os << "; ";
  };
  list("missing_in_a", missing_in_a);
  list("missing_in_b", missing_in_b);
  for (const auto& m : shape_mismatch) {
    os << "shape_mismatch: " << m.name << " " << shape_string(m.shape_a) << " vs " << shape_string(m.shape_b) << "; ";
  }
  std::string s = os.str();
  return s.substr(0, s.size() - 2);
}

CompatibilityReport check_compatible(const ParameterSet& a, const ParameterSet& b) {
  CompatibilityReport report;
  for (const auto& [name, ta] : a.tensors()) {
    const auto* tb = b.find(name);
    if (tb == nullptr) {
      report.missing_in_b.push_back(name);
    } else if (ta.shape() != tb->shape()) {
      report.shape_mismatch.push_back({name, ta.shape(), tb->shape()});
    }
  }
  for (const auto& [name, _] : b.tensors()) {
    if (a.find(name) == nullptr) report.missing_in_a.push_back(name);
  }
  return report;
}

IncompatibleError::IncompatibleError(const std::string& context, CompatibilityReport report)
    : Error(context + ": incompatible parameter sets (" + report.describe() + ")"), report_(std::move(report)) {}

void require_compatible(const ParameterSet& a, const ParameterSet& b, const std::string& context) {
  auto report = check_compatible(a, b);
  if (!report.compatible()) throw IncompatibleError(context, std::move(report));
}

}  // namespace emovec
