#pragma once

// Parameter sets and the EVC1 checkpoint container.
//
// Layout of a .evc file:
//   bytes 0..3   magic "EVC1"
//   bytes 4..7   header length N, unsigned 32-bit little-endian
//   next N bytes UTF-8 JSON header:
//                {"allow_nonfinite": bool (only when set), "dtype": "f32",
//                 "meta": {...}, "tensors": [{"name", "nbytes", "offset",
//                 "shape"}, ...], "version": 1}
//                Object keys are emitted sorted, tensors sorted by name.
//   remainder    payload: little-endian f32 data of every tensor, in
//                descriptor order, no padding. Offsets are relative to the
//                payload start.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "emovec/error.hpp"

namespace emovec {

using MetaMap = std::map<std::string, std::string>;
using Shape = std::vector<std::size_t>;

std::size_t shape_elements(std::span<const std::size_t> shape);
std::string shape_string(std::span<const std::size_t> shape);

class TensorEntry {
 public:
  TensorEntry(std::string name, Shape shape, std::vector<float> data);
  // Zero-filled tensor of the given shape.
  TensorEntry(std::string name, Shape shape);

  const std::string& name() const noexcept { return name_; }
  const Shape& shape() const noexcept { return shape_; }
  std::span<const float> data() const noexcept { return data_; }
  std::span<float> mutable_data() noexcept { return data_; }
  std::size_t size() const noexcept { return data_.size(); }

  bool all_finite() const;
  // Bit-exact comparison: -0.0 != +0.0, identical NaN payloads compare equal.
  friend bool operator==(const TensorEntry& a, const TensorEntry& b);

 private:
  std::string name_;
  Shape shape_;
  std::vector<float> data_;
};

class ParameterSet {
 public:
  using TensorMap = std::map<std::string, TensorEntry, std::less<>>;

  ParameterSet() = default;
  explicit ParameterSet(std::vector<TensorEntry> tensors, MetaMap meta = {});

  // Throws CheckpointError(duplicate_name) when the name exists.
  void insert(TensorEntry tensor);

  const TensorMap& tensors() const noexcept { return tensors_; }
  const TensorEntry& at(std::string_view name) const;
  TensorEntry& at(std::string_view name);
  const TensorEntry* find(std::string_view name) const;
  bool empty() const noexcept { return tensors_.empty(); }
  std::size_t total_elements() const;

  const MetaMap& meta() const noexcept { return meta_; }
  std::optional<std::string> meta_value(std::string_view key) const;
  void set_meta(std::string key, std::string value) { meta_[std::move(key)] = std::move(value); }
  void erase_meta(const std::string& key) { meta_.erase(key); }

  bool allow_nonfinite() const noexcept { return allow_nonfinite_; }
  void set_allow_nonfinite(bool allow) noexcept { allow_nonfinite_ = allow; }

  // Checks finiteness (unless allowed) and the reserved meta keys.
  void validate() const;

  friend bool operator==(const ParameterSet& a, const ParameterSet& b);

 private:
  TensorMap tensors_;
  MetaMap meta_;
  bool allow_nonfinite_ = false;
};

enum class CheckpointErrc {
  io,
  bad_magic,
  header_length,
  bad_header,
  payload_length,
  duplicate_name,
  descriptor_mismatch,
  nonfinite,
  invalid_meta,
};

std::string_view to_string(CheckpointErrc code);

class CheckpointError : public Error {
 public:
  CheckpointError(CheckpointErrc code, const std::string& what);
  CheckpointErrc code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  CheckpointErrc code_;
  std::string detail_;
};

std::vector<std::uint8_t> encode_checkpoint(const ParameterSet& set);
ParameterSet decode_checkpoint(std::span<const std::uint8_t> bytes);

void save(const ParameterSet& set, const std::filesystem::path& path);
ParameterSet load(const std::filesystem::path& path);

// SHA-256 of the canonical encoding; used for provenance metadata.
std::string content_hash(const ParameterSet& set);

struct ShapeMismatch {
  std::string name;
  Shape shape_a;
  Shape shape_b;
  friend bool operator==(const ShapeMismatch&, const ShapeMismatch&) = default;
};

struct CompatibilityReport {
  std::vector<std::string> missing_in_a;
  std::vector<std::string> missing_in_b;
  std::vector<ShapeMismatch> shape_mismatch;

  bool compatible() const noexcept {
    return missing_in_a.empty() && missing_in_b.empty() && shape_mismatch.empty();
  }
  std::string describe() const;
  friend bool operator==(const CompatibilityReport&, const CompatibilityReport&) = default;
};

CompatibilityReport check_compatible(const ParameterSet& a, const ParameterSet& b);

class IncompatibleError : public Error {
 public:
  IncompatibleError(const std::string& context, CompatibilityReport report);
  const CompatibilityReport& report() const noexcept { return report_; }

 private:
  CompatibilityReport report_;
};

// Throws IncompatibleError naming `context` when a and b differ in layout.
void require_compatible(const ParameterSet& a, const ParameterSet& b, const std::string& context);

namespace meta_keys {
inline constexpr const char* role = "role";
inline constexpr const char* emotion = "emotion";
inline constexpr const char* scope = "scope";
inline constexpr const char* seed = "seed";
inline constexpr const char* steps = "steps";
}  // namespace meta_keys

}  // namespace emovec
