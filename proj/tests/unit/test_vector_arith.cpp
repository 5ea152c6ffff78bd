#include <cmath>

#include "doctest.h"
#include "emovec/log.hpp"
#include "emovec/vector_arith.hpp"
#include "testing.hpp"

using namespace emovec;
using emovec::testing::ulp_distance;

namespace {

ParameterSet single(const std::string& name, std::vector<float> values, const char* role = nullptr) {
  ParameterSet s;
  const std::size_t n = values.size();
  s.insert(TensorEntry(name, {n}, std::move(values)));
  if (role) s.set_meta("role", role);
  return s;
}

std::vector<std::string> capture_warnings(const std::function<void()>& f) {
  std::vector<std::string> out;
  ScopedLogSink sink([&](LogLevel level, std::string_view msg) {
    if (level == LogLevel::warn) out.emplace_back(msg);
  });
  f();
  return out;
}

}  // namespace

TEST_CASE("extract is elementwise subtraction") {
  const auto tau = extract_vector(single("w", {2.0f, 1.0f}, "finetuned"), single("w", {0.5f, 1.0f}, "pretrained"), "angry");
  const auto d = tau.params().at("w").data();
  CHECK(d[0] == 1.5f);
  CHECK(d[1] == 0.0f);
  CHECK(tau.label() == "angry");
  CHECK(tau.params().meta_value("role") == "vector");
  CHECK(tau.source_emo() == content_hash(single("w", {2.0f, 1.0f}, "finetuned")));
  CHECK(tau.source_pre() == content_hash(single("w", {0.5f, 1.0f}, "pretrained")));
}

TEST_CASE("self-difference is zero") {
  Rng rng(1);
  const auto [pre, emo] = testing::finetune_like_pair(rng);
  const auto tau = extract_vector(pre, pre, "sad");
  const auto st = vector_stats(tau);
  CHECK(st.global.l2 == 0.0);
  CHECK(st.global.near_zero_fraction == 1.0);
}

TEST_CASE("extract rejects incompatible sets and warns on role") {
  ParameterSet emo = single("w", {1.0f});
  emo.insert(TensorEntry("b", {1}));
  CHECK_THROWS_AS(extract_vector(emo, single("w", {1.0f}, "pretrained"), "angry"), IncompatibleError);
  const auto warnings = capture_warnings([] { extract_vector(single("w", {1.0f}), single("w", {0.0f}, "finetuned"), "angry"); });
  CHECK(warnings.size() == 1);
}

TEST_CASE("scope follows the source meta") {
  auto pre = single("w", {0.0f}, "pretrained");
  auto emo = single("w", {1.0f}, "finetuned");
  CHECK(extract_vector(emo, pre, "happy").scope() == VectorScope::single_speaker);
  pre.set_meta("scope", "multi");
  emo.set_meta("scope", "multi");
  CHECK(extract_vector(emo, pre, "happy").scope() == VectorScope::speaker_agnostic);
}

TEST_CASE("apply with alpha 0.9") {
  const auto tau = extract_vector(single("w", {2.0f}, "finetuned"), single("w", {0.0f}, "pretrained"), "angry");
  const auto out = apply_vector(single("w", {1.0f}, "pretrained"), tau, 0.9);
  CHECK(out.at("w").data()[0] == static_cast<float>(1.0 + 0.9 * 2.0));
  CHECK(out.meta_value("role") == "merged");
  CHECK(out.meta_value("alpha") == "0.9");
  CHECK(out.meta_value("emotion") == "angry");
  CHECK(out.meta_value("vector_hash") == tau.hash());
}

TEST_CASE("apply rejects non-finite alpha and warns outside the exercised range") {
  Rng rng(3);
  const auto [pre, emo] = testing::finetune_like_pair(rng);
  const auto tau = extract_vector(emo, pre, "angry");
  CHECK_THROWS_AS(apply_vector(pre, tau, std::nan("")), Error);
  CHECK_THROWS_AS(apply_vector(pre, tau, INFINITY), Error);
  CHECK(capture_warnings([&] { apply_vector(pre, tau, 1.5); }).size() == 1);
  CHECK(capture_warnings([&] { apply_vector(pre, tau, -0.5); }).size() == 1);
  CHECK(capture_warnings([&] { apply_vector(pre, tau, 1.2); }).empty());
}

TEST_CASE("alpha 0 is bit-identical, including signed zeros") {
  Rng rng(4);
  for (int i = 0; i < 20; ++i) {
    auto [pre, emo] = testing::finetune_like_pair(rng);
    pre.insert(TensorEntry("zz", {2}, {-0.0f, 1e-42f}));
    emo.insert(TensorEntry("zz", {2}, {5.0f, -3.0f}));
    const auto tau = extract_vector(emo, pre, "angry");
    const auto out = apply_vector(pre, tau, 0.0);
    for (const auto& [name, t] : pre.tensors()) CHECK(out.at(name) == t);
  }
}

TEST_CASE("reconstruction within 2 ulp on fine-tune-like pairs") {
  Rng rng(5);
  std::int64_t worst = 0;
  for (int i = 0; i < 50; ++i) {
    const auto [pre, emo] = testing::finetune_like_pair(rng);
    const auto out = apply_vector(pre, extract_vector(emo, pre, "sad"), 1.0);
    for (const auto& [name, t] : emo.tensors()) {
      const auto got = out.at(name).data();
      for (std::size_t k = 0; k < t.size(); ++k) worst = std::max(worst, ulp_distance(got[k], t.data()[k]));
    }
  }
  CHECK(worst <= 2);
}

// For arbitrary pairs the error is bounded by the two roundings,
// 0.5 ulp(result) + 0.5 ulp(emo - pre); in ulps of emo this is unbounded when
// emo - pre is much larger than emo.
TEST_CASE("reconstruction obeys the two-rounding bound for arbitrary pairs") {
  Rng rng(6);
  auto wide = [&] {
    const double mag = std::pow(10.0, rng.uniform(-20.0, 20.0));
    return static_cast<float>(rng.below(2) ? mag : -mag);
  };
  for (int i = 0; i < 30; ++i) {
    const auto pre = testing::random_layout(rng, wide);
    const auto emo = testing::map_values(pre, [&](float) { return wide(); });
    const auto out = apply_vector(pre, extract_vector(emo, pre, "happy"), 1.0);
    for (const auto& [name, t] : emo.tensors()) {
      for (std::size_t k = 0; k < t.size(); ++k) {
        const float e = t.data()[k];
        const float p = pre.at(name).data()[k];
        const float tau = static_cast<float>(static_cast<double>(e) - static_cast<double>(p));
        const float got = out.at(name).data()[k];
        const double bound = 0.5 * std::max(testing::ulp_of(e), testing::ulp_of(got)) + 0.5 * testing::ulp_of(tau);
        CHECK(std::fabs(static_cast<double>(got) - e) <= bound * (1 + 1e-8));
      }
    }
  }
  // A cancellation case outside the 2-ulp regime.
  const auto pre = single("w", {1000.0f}, "pretrained");
  const auto emo = single("w", {0.001f}, "finetuned");
  const auto out = apply_vector(pre, extract_vector(emo, pre, "angry"), 1.0);
  CHECK(ulp_distance(out.at("w").data()[0], 0.001f) > 2);
}

TEST_CASE("additivity within 4 ulp for a, b in [-1, 1]") {
  Rng rng(7);
  std::int64_t worst = 0;
  for (int i = 0; i < 40; ++i) {
    const auto [pre, emo] = testing::finetune_like_pair(rng);
    const auto tau = extract_vector(emo, pre, "angry");
    const double a = rng.uniform(-1.0, 1.0);
    const double b = rng.uniform(-1.0, 1.0);
    ScopedLogSink quiet([](LogLevel, std::string_view) {});
    const auto two_step = apply_vector(apply_vector(pre, tau, a), tau, b);
    const auto one_step = apply_vector(pre, tau, a + b);
    for (const auto& [name, t] : one_step.tensors()) {
      for (std::size_t k = 0; k < t.size(); ++k) {
        worst = std::max(worst, ulp_distance(two_step.at(name).data()[k], t.data()[k]));
      }
    }
  }
  CHECK(worst <= 4);
}

TEST_CASE("extraction is antisymmetric within 1 ulp") {
  Rng rng(8);
  for (int i = 0; i < 20; ++i) {
    const auto [pre, emo] = testing::finetune_like_pair(rng);
    const auto fwd = extract_vector(emo, pre, "sad");
    ScopedLogSink quiet([](LogLevel, std::string_view) {});
    const auto rev = extract_vector(pre, emo, "sad");
    for (const auto& [name, t] : fwd.params().tensors()) {
      for (std::size_t k = 0; k < t.size(); ++k) {
        CHECK(ulp_distance(t.data()[k], -rev.params().at(name).data()[k]) <= 1);
      }
    }
  }
}

TEST_CASE("combine") {
  Rng rng(9);
  auto [pre, emo] = testing::finetune_like_pair(rng);
  pre.set_meta("scope", "multi");
  emo.set_meta("scope", "multi");
  const auto tau = extract_vector(emo, pre, "angry");

  SUBCASE("singleton with weight 1 is identity") {
    const auto c = combine({{tau, 1.0}});
    for (const auto& [name, t] : tau.params().tensors()) CHECK(c.params().at(name) == t);
    CHECK(c.scope() == VectorScope::speaker_agnostic);
  }
  SUBCASE("two halves give the input back within 1 ulp") {
    const auto c = combine({{tau, 0.5}, {tau, 0.5}});
    for (const auto& [name, t] : tau.params().tensors()) {
      for (std::size_t k = 0; k < t.size(); ++k) CHECK(ulp_distance(c.params().at(name).data()[k], t.data()[k]) <= 1);
    }
  }
  SUBCASE("cancellation gives zero") {
    const auto c = combine({{tau, 1.0}, {tau, -1.0}});
    CHECK(vector_stats(c).global.l2 == 0.0);
  }
  SUBCASE("labels concatenate and scope needs every input agnostic") {
    ParameterSet p2 = pre, e2 = emo;
    p2.erase_meta("scope");
    e2.erase_meta("scope");
    const auto single_tau = extract_vector(e2, p2, "sad");
    const auto c = combine({{tau, 1.0}, {single_tau, 1.0}});
    CHECK(c.label() == "angry+sad");
    CHECK(c.scope() == VectorScope::single_speaker);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(combine({}), Error);
    const auto other = extract_vector(single("w", {1.0f}), single("w", {0.0f}, "pretrained"), "sad");
    CHECK_THROWS_AS(combine({{tau, 1.0}, {other, 1.0}}), IncompatibleError);
  }
}

TEST_CASE("vector stats") {
  const auto simple = extract_vector(single("w", {3.0f, 4.0f}), single("w", {0.0f, 0.0f}, "pretrained"), "angry");
  const auto st = vector_stats(simple);
  CHECK(st.global.l2 == 5.0);
  CHECK(st.global.max_abs == 4.0);
  CHECK(st.global.near_zero_fraction == 0.0);
  CHECK(st.global.count == 2);

  // Brute-force recomputation on a random vector.
  Rng rng(10);
  const auto [pre, emo] = testing::finetune_like_pair(rng);
  const auto tau = extract_vector(emo, pre, "angry");
  const auto r = vector_stats(tau);
  double ss = 0, mx = 0;
  std::size_t near = 0, n = 0;
  for (const auto& t : r.tensors) {
    const auto& entry = tau.params().at(t.name);
    double tss = 0;
    for (float v : entry.data()) {
      tss += static_cast<double>(v) * v;
      mx = std::max(mx, std::fabs(static_cast<double>(v)));
      near += std::fabs(v) < kNearZero;
      ++n;
    }
    CHECK(t.l2 == doctest::Approx(std::sqrt(tss)).epsilon(1e-12));
    ss += tss;
  }
  CHECK(r.global.l2 == doctest::Approx(std::sqrt(ss)).epsilon(1e-12));
  CHECK(r.global.max_abs == mx);
  CHECK(r.global.count == n);
  CHECK(r.global.near_zero_fraction == doctest::Approx(static_cast<double>(near) / n));
}

TEST_CASE("emotion vector requires its metadata") {
  ParameterSet p = single("w", {1.0f});
  CHECK_THROWS_AS(EmotionVector{p}, Error);
  p.set_meta("role", "vector");
  p.set_meta("emotion", "angry");
  CHECK_THROWS_AS(EmotionVector{p}, Error);
  p.set_meta("source_emo", "x");
  p.set_meta("source_pre", "y");
  p.set_meta("scope", "single-speaker");
  CHECK_NOTHROW(EmotionVector{p});
}

TEST_CASE("format_double is shortest round-trip") {
  CHECK(format_double(0.9) == "0.9");
  CHECK(format_double(1.0) == "1");
  CHECK(std::stod(format_double(0.1 + 0.2)) == 0.1 + 0.2);
}
