// Copyright 2026 The oocd Authors.
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <vector>

#include "doctest.h"
#include "oocd/error.hpp"
#include "oocd/rng.hpp"
#include "oocd/similarity.hpp"
#include "oocd/store.hpp"
#include "test_support.hpp"

using namespace oocd;

namespace {

std::vector<double> random_vector(Rng& rng, std::size_t dim) {
  std::vector<double> v(dim);
  for (auto& x : v) x = rng.normal();
  return v;
}

void put(EmbeddingStore& store, const std::string& id, Artifact a, const std::string& enc,
         std::vector<float> v) {
  store.ensure_partition(enc, static_cast<std::uint32_t>(v.size()));
  store.put({id, a, enc, std::move(v)});
}

// Six records whose pairwise cosines are (clip, sbert, vit).
void plant_triple(EmbeddingStore& store, const std::string& id, const EncoderSet& enc) {
  put(store, id, Artifact::kImage, enc.joint, {1, 2, 2});
  put(store, id, Artifact::kCaption, enc.joint, {2, 1, 2});  // 8/9
  put(store, id, Artifact::kCaption, enc.text, {1, 0});
  put(store, id, Artifact::kGeneratedCaption, enc.text, {-0.5f, std::sqrt(3.0f) / 2});  // -0.5
  put(store, id, Artifact::kImage, enc.image, {1, 0});
  put(store, id, Artifact::kGeneratedImage, enc.image, {0.6f, 0.8f});  // 0.6
}

}  // namespace

TEST_CASE("cosine hand-computed cases") {
  const std::vector<double> a{1, 2, 2}, b{2, 1, 2};
  CHECK(cosine(a, b) == doctest::Approx(8.0 / 9.0).epsilon(1e-12));
  CHECK(std::abs(cosine(a, b) - 0.888889) < 1e-6);
  CHECK(cosine(std::vector<double>{1, 0}, std::vector<double>{0, 1}) == 0.0);
  CHECK(cosine(a, a) == doctest::Approx(1.0).epsilon(1e-15));
  const std::vector<float> fa{1, 2, 2}, fb{2, 1, 2};
  CHECK(cosine(fa, fb) == doctest::Approx(8.0 / 9.0).epsilon(1e-12));
}

TEST_CASE("cosine rejects zero vectors and length mismatches") {
  CHECK_THROWS_AS(cosine(std::vector<double>{0, 0}, std::vector<double>{1, 0}), ZeroVector);
  CHECK_THROWS_AS(cosine(std::vector<double>{1, 0}, std::vector<double>{0, 0}), ZeroVector);
  CHECK_THROWS_AS(cosine(std::vector<double>{1, 0}, std::vector<double>{1, 0, 0}),
                  LengthMismatch);
}

TEST_CASE("cosine properties over random pairs") {
  Rng rng(2024);
  for (std::size_t dim : {512u, 768u, 1024u}) {
    for (int trial = 0; trial < 200; ++trial) {
      const auto u = random_vector(rng, dim);
      const auto v = random_vector(rng, dim);
      const double c = cosine(u, v);
      CHECK(std::abs(c) <= 1.0 + 1e-9);
      CHECK(cosine(v, u) == c);
      CHECK(cosine(u, u) == doctest::Approx(1.0).epsilon(1e-12));
      const double alpha = rng.uniform(0.01, 100.0), beta = rng.uniform(0.01, 100.0);
      std::vector<double> su(u), sv(v);
      for (auto& x : su) x *= alpha;
      for (auto& x : sv) x *= beta;
      CHECK(std::abs(cosine(su, sv) - c) <= 1e-9);
    }
  }
}

TEST_CASE("similarity_triple reads the six records") {
  const auto dir = testing::scratch_dir("sim_triple");
  auto store = EmbeddingStore::open(dir);
  const EncoderSet enc{"j", "t", "v"};
  plant_triple(store, "a", enc);
  const auto t = similarity_triple(store, "a", enc);
  CHECK(t.sample_id == "a");
  CHECK(std::abs(t.clip_sim - 0.888889) < 1e-6);
  CHECK(std::abs(t.sbert_sim + 0.5) < 1e-6);
  CHECK(std::abs(t.vit_sim - 0.6) < 1e-6);

  put(store, "same", Artifact::kImage, "j", {1, 1, 0});
  put(store, "same", Artifact::kCaption, "j", {1, 1, 0});
  put(store, "same", Artifact::kCaption, "t", {0, 3});
  put(store, "same", Artifact::kGeneratedCaption, "t", {0, 3});
  put(store, "same", Artifact::kImage, "v", {2, 0});
  put(store, "same", Artifact::kGeneratedImage, "v", {2, 0});
  const auto same = similarity_triple(store, "same", enc);
  for (double v : same.values()) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));

  try {
    similarity_triple(store, "missing", enc);
    FAIL("expected MissingRecord");
  } catch (const MissingRecord& e) {
    const std::string msg = e.what();
    CHECK(msg.find("missing") != std::string::npos);
  }
}

TEST_CASE("threshold_classify examples") {
  const std::array<double, 3> half{0.5, 0.5, 0.5};
  const SimilarityTriple high{"a", 1, 1, 1}, low{"b", -1, -1, -1}, mixed{"c", 0.7, 0.2, 0.6};
  for (auto agg : {Aggregation::kAll, Aggregation::kMajority, Aggregation::kMean}) {
    CHECK(threshold_classify(high, {1, 1, 1}, agg) == Label::kPristine);
    CHECK(threshold_classify(high, {-1, 0.3, 0.9}, agg) == Label::kPristine);
    CHECK(threshold_classify(low, {0, 0, 0}, agg) == Label::kFalsified);
  }
  CHECK(threshold_classify(mixed, half, Aggregation::kMajority) == Label::kPristine);
  CHECK(threshold_classify(mixed, half, Aggregation::kAll) == Label::kFalsified);
  CHECK(threshold_classify({"e", 0.7, 0.3, 0.6}, half, Aggregation::kMean) == Label::kPristine);
  CHECK(threshold_classify({"f", 0.7, 0.1, 0.6}, half, Aggregation::kMean) == Label::kFalsified);
  // Equality with the threshold passes.
  CHECK(threshold_classify({"d", 0.5, 0.5, 0.5}, half, Aggregation::kAll) == Label::kPristine);
}

TEST_CASE("threshold_classify is monotone in every channel") {
  Rng rng(5);
  for (int trial = 0; trial < 2000; ++trial) {
    std::array<double, 3> sims, th;
    for (auto& s : sims) s = rng.uniform(-1, 1);
    for (auto& t : th) t = rng.uniform(-1, 1);
    const auto agg = static_cast<Aggregation>(trial % 3);
    const std::size_t ch = rng.uniform_index(3);
    auto raised = sims;
    raised[ch] = rng.uniform(sims[ch], 1.0);
    const auto before = threshold_classify({"x", sims[0], sims[1], sims[2]}, th, agg);
    const auto after = threshold_classify({"x", raised[0], raised[1], raised[2]}, th, agg);
    if (before == Label::kPristine) CHECK(after == Label::kPristine);
  }
}

TEST_CASE("fitted thresholds separate a separable validation set") {
  std::vector<SimilarityTriple> triples;
  std::vector<Label> labels;
  Rng rng(9);
  for (int i = 0; i < 60; ++i) {
    const bool pristine = i % 2 == 0;
    const double lo = pristine ? 0.8 : -0.1, hi = pristine ? 0.95 : 0.2;
    triples.push_back({"s" + std::to_string(i), rng.uniform(lo, hi), rng.uniform(lo, hi),
                       rng.uniform(lo, hi)});
    labels.push_back(pristine ? Label::kPristine : Label::kFalsified);
  }
  for (auto agg : {Aggregation::kAll, Aggregation::kMajority, Aggregation::kMean}) {
    const auto th = fit_thresholds(triples, labels, agg);
    for (double t : th) {
      CHECK(t >= -1.0);
      CHECK(t <= 1.0);
      // Grid step of 0.01.
      CHECK(std::abs(t * 100 - std::round(t * 100)) < 1e-9);
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < triples.size(); ++i) {
      correct += threshold_classify(triples[i], th, agg) == labels[i];
    }
    CHECK(correct == triples.size());
  }
  CHECK_THROWS_AS(fit_thresholds(std::vector<SimilarityTriple>{}, {}, Aggregation::kAll),
                  EmptyInput);
  CHECK_THROWS_AS(fit_thresholds(triples, {Label::kPristine}, Aggregation::kAll), LengthMismatch);
}

TEST_CASE("aggregation parsing") {
  CHECK(parse_aggregation("majority") == Aggregation::kMajority);
  CHECK(to_string(Aggregation::kMean) == "mean");
  CHECK_FALSE(parse_aggregation("any").has_value());
}

TEST_CASE("triples CSV uses six decimals and integer labels") {
  const std::vector<SimilarityTriple> t{{"a", 8.0 / 9.0, -0.5, 0.6}, {"b", 1, 0, -1}};
  const std::string csv = triples_csv(t, {Label::kPristine, Label::kFalsified});
  CHECK(csv ==
        "sample_id,clip_sim,sbert_sim,vit_sim,label\n"
        "a,0.888889,-0.500000,0.600000,0\n"
        "b,1.000000,0.000000,-1.000000,1\n");
  CHECK_THROWS_AS(triples_csv(t, {Label::kPristine}), LengthMismatch);
}
