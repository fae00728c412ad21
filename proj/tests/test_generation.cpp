// Copyright 2026 The oocd Authors.
// SPDX-License-Identifier: Apache-2.0

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <thread>

#include "doctest.h"
#include "oocd/binary_io.hpp"
#include "oocd/encoder.hpp"
#include "oocd/error.hpp"
#include "oocd/generation.hpp"
#include "oocd/hash.hpp"
#include "oocd/image.hpp"
#include "oocd/similarity.hpp"
#include "test_support.hpp"

using namespace oocd;
namespace fs = std::filesystem;

namespace {

Image patterned(std::uint32_t w, std::uint32_t h, std::uint8_t salt) {
  Image img(w, h);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    img.pixels[i] = static_cast<std::uint8_t>((i * 31 + salt * 7) & 0xff);
  }
  return img;
}

std::vector<Sample> make_samples(const fs::path& dir, std::size_t n) {
  fs::create_directories(dir / "img");
  std::vector<Sample> out;
  for (std::size_t i = 0; i < n; ++i) {
    Sample s;
    s.id = "g" + std::to_string(i);
    s.caption = "caption number " + std::to_string(i);
    s.relative_image_path = "img/" + s.id + ".png";
    s.image_path = dir / s.relative_image_path;
    write_png(patterned(8, 6, static_cast<std::uint8_t>(i)), s.image_path);
    out.push_back(s);
  }
  return out;
}

// Mock generator that refuses prompts containing a marker.
class FlakyImageBackend : public ImageBackend {
 public:
  explicit FlakyImageBackend(std::string marker) : marker_(std::move(marker)) {}
  std::string id() const override { return "flaky-image"; }

 protected:
  Image do_generate(const std::string& prompt, const GenerationConfig& config) override {
    if (prompt.find(marker_) != std::string::npos) throw std::runtime_error("refused");
    return MockImageBackend::render(prompt, config.seed, config.resolution);
  }

 private:
  std::string marker_;
};

std::size_t line_count(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  std::string line;
  while (std::getline(in, line)) n += !line.empty();
  return n;
}

GenerationConfig small_config() {
  GenerationConfig c;
  c.resolution = 64;  // keeps the tests fast; the default stays 512
  return c;
}

}  // namespace

TEST_CASE("default generation config") {
  const GenerationConfig c;
  CHECK(c.ddim_steps == 500);
  CHECK(c.resolution == 512);
  CHECK(c.guidance_scale == 7.5);
  CHECK(c.seed == 42);
  CHECK(c.caption_candidates == 1);
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("config hash changes with every field") {
  const GenerationConfig base;
  std::vector<GenerationConfig> variants(8, base);
  variants[0].ddim_steps = 50;
  variants[1].guidance_scale = 7.0;
  variants[2].seed = 43;
  variants[3].resolution = 256;
  variants[4].backend_caption = "other";
  variants[5].backend_image = "other";
  variants[6].caption_candidates = 3;
  variants[7].max_caption_tokens = 20;
  for (const auto& v : variants) CHECK(v.hash() != base.hash());
  CHECK(GenerationConfig{}.hash() == base.hash());
  CHECK(GenerationConfig::from_json(base.to_json()).hash() == base.hash());
}

TEST_CASE("invalid generation configs are rejected") {
  GenerationConfig c;
  c.ddim_steps = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.resolution = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.guidance_scale = -1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("mock caption is derived from the pixel hash") {
  const auto dir = testing::scratch_dir("gen_caption");
  const Image img = patterned(5, 4, 1);
  write_png(img, dir / "a.png");
  MockCaptionBackend backend;
  const GenerationConfig c;
  const auto first = generate_caption(dir / "a.png", backend, c);
  CHECK(first == "mock-caption-" + pixel_hash(img));
  CHECK(generate_caption(dir / "a.png", backend, c) == first);
  CHECK(backend.calls() == 2);
}

TEST_CASE("several candidates condense to the medoid under the text encoder") {
  const auto dir = testing::scratch_dir("gen_condense");
  write_png(patterned(5, 4, 2), dir / "a.png");
  GenerationConfig c;
  c.caption_candidates = 3;
  MockCaptionBackend backend;
  MockEncoder text({"text-mock", Modality::kText, 16});

  // Plant vectors so the middle candidate is closest to both others.
  const std::string base = "mock-caption-" + pixel_hash(patterned(5, 4, 2));
  text.plant(MockEncoder::text_key(base), {1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0});
  text.plant(MockEncoder::text_key(base + "-1"),
             {1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0});
  text.plant(MockEncoder::text_key(base + "-2"),
             {0, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0});
  // Sums of cosines: base 0 + 0.7071, "-1" 0.7071 * 2, "-2" 0.7071 + 0.
  CHECK(generate_caption(dir / "a.png", backend, c, &text) == base + "-1");
  CHECK_THROWS_AS(generate_caption(dir / "a.png", backend, c), BackendUnavailable);

  // Unplanted: the medoid computed directly from the hashed vectors.
  MockEncoder plain({"text-mock", Modality::kText, 16});
  const std::vector<std::string> cands = {base, base + "-1", base + "-2"};
  std::size_t best = 0;
  double best_score = -1e9;
  for (std::size_t i = 0; i < 3; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < 3; ++j) {
      if (i != j) {
        s += cosine(plain.hashed_vector(MockEncoder::text_key(cands[i])),
                    plain.hashed_vector(MockEncoder::text_key(cands[j])));
      }
    }
    if (s > best_score) {
      best_score = s;
      best = i;
    }
  }
  CHECK(generate_caption(dir / "a.png", backend, c, &plain) == cands[best]);
}

TEST_CASE("mock image is a pure function of prompt and seed") {
  const Image a = MockImageBackend::render("a red boat", 42, 64);
  const Image b = MockImageBackend::render("a red boat", 42, 64);
  CHECK(a.width == 64);
  CHECK(a.height == 64);
  CHECK(pixel_hash(a) == pixel_hash(b));
  CHECK(pixel_hash(a) != pixel_hash(MockImageBackend::render("a red boat", 43, 64)));
  CHECK(pixel_hash(a) != pixel_hash(MockImageBackend::render("a blue boat", 42, 64)));
}

TEST_CASE("generated image is resized to the native size and cached") {
  const auto dir = testing::scratch_dir("gen_image_cache");
  ArtifactCache cache(dir / "cache");
  MockImageBackend backend;
  const GenerationConfig c = small_config();
  const auto p1 = generate_image("s1", "a harbor at dusk", backend, c, cache, 10, 7);
  CHECK(backend.calls() == 1);
  const Image img = read_png(p1);
  CHECK(img.width == 10);
  CHECK(img.height == 7);
  const auto p2 = generate_image("s1", "a harbor at dusk", backend, c, cache, 10, 7);
  CHECK(p1 == p2);
  CHECK(backend.calls() == 1);
  CHECK(p1 == dir / "cache" / c.hash() / "s1.image.png");
}

TEST_CASE("empty prompt fails") {
  const auto dir = testing::scratch_dir("gen_empty_prompt");
  ArtifactCache cache(dir);
  MockImageBackend backend;
  CHECK_THROWS_AS(generate_image("s", "", backend, small_config(), cache, 4, 4),
                  GenerationFailed);
}

TEST_CASE("generate_pairs: empty input, warm rerun, order") {
  const auto dir = testing::scratch_dir("gen_pairs");
  MockCaptionBackend cap;
  MockImageBackend img;
  ArtifactCache cache(dir / "cache");
  const GenerationConfig c = small_config();

  CHECK(generate_pairs({}, c, {&cap, &img}, cache).pairs.empty());

  const auto samples = make_samples(dir, 10);
  const auto first = generate_pairs(samples, c, {&cap, &img}, cache, 4);
  REQUIRE(first.pairs.size() == 10);
  CHECK(first.failures.empty());
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK(first.pairs[i].sample_id == samples[i].id);
    CHECK(first.pairs[i].config_hash == c.hash());
    CHECK(fs::exists(first.pairs[i].generated_image_path));
  }
  CHECK(cap.calls() == 10);
  CHECK(img.calls() == 10);

  MockCaptionBackend cap2;
  MockImageBackend img2;
  const auto second = generate_pairs(samples, c, {&cap2, &img2}, cache);
  CHECK(cap2.calls() == 0);
  CHECK(img2.calls() == 0);
  CHECK(second.cache_hits == 20);
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK(second.pairs[i].generated_caption == first.pairs[i].generated_caption);
  }
  CHECK(fs::exists(dir / "cache" / c.hash() / "config.json"));
}

TEST_CASE("generate_pairs records one failing sample and keeps the rest") {
  const auto dir = testing::scratch_dir("gen_pairs_failure");
  const auto samples = make_samples(dir, 10);
  MockCaptionBackend cap;
  FlakyImageBackend img("number 3");
  ArtifactCache cache(dir / "cache");
  GenerationConfig c = small_config();
  c.backend_image = img.id();
  const auto r = generate_pairs(samples, c, {&cap, &img}, cache);
  CHECK(r.pairs.size() == 9);
  REQUIRE(r.failures.size() == 1);
  CHECK(r.failures[0].sample_id == "g3");
  CHECK(r.failures[0].kind == "image");
  CHECK(line_count(cache.ledger_path(c.hash())) == 1);

  FlakyImageBackend all("caption");
  ArtifactCache cache2(dir / "cache2");
  CHECK_THROWS_AS(generate_pairs(samples, c, {&cap, &all}, cache2), GenerationFailed);
}

TEST_CASE("missing backend is reported as unavailable") {
  const auto dir = testing::scratch_dir("gen_no_backend");
  const auto samples = make_samples(dir, 1);
  ArtifactCache cache(dir);
  CHECK_THROWS_AS(generate_pairs(samples, GenerationConfig{}, {}, cache), BackendUnavailable);
}

TEST_CASE("cache: first writer wins under concurrent writers") {
  const auto dir = testing::scratch_dir("gen_first_writer");
  ArtifactCache cache(dir);
  std::atomic<int> winners{0};
  std::vector<std::thread> threads;
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&, t] {
      if (cache.store_caption("h", "same", "writer " + std::to_string(t))) ++winners;
    });
  }
  for (auto& th : threads) th.join();
  CHECK(winners == 1);
  const auto text = cache.load_caption("h", "same");
  REQUIRE(text.has_value());
  CHECK(text->rfind("writer ", 0) == 0);
  CHECK_FALSE(cache.store_caption("h", "same", "late"));
  CHECK(*cache.load_caption("h", "same") == *text);
}

TEST_CASE("cache file names escape unsafe ids") {
  CHECK(ArtifactCache::file_stem("abc_1-2.x") == "abc_1-2.x");
  CHECK(ArtifactCache::file_stem("a/b") == "a%2Fb");
  CHECK(ArtifactCache::file_stem(".hidden") == "%2Ehidden");
}

#ifdef OOCD_MOCK_ADAPTER
TEST_CASE("subprocess backends speak the line protocol") {
  const auto dir = testing::scratch_dir("gen_subprocess");
  const Image original = patterned(6, 6, 9);
  write_png(original, dir / "a.png");
  const GenerationConfig c = small_config();

  SubprocessCaptionBackend cap("adapter-caption", {OOCD_MOCK_ADAPTER});
  CHECK(generate_caption(dir / "a.png", cap, c) == "mock-caption-" + pixel_hash(original));

  ArtifactCache cache(dir / "cache");
  SubprocessImageBackend img("adapter-image", {OOCD_MOCK_ADAPTER}, dir / "scratch");
  const auto path = generate_image("s", "prompt text", img, c, cache, 6, 6);
  CHECK(read_png(path) == resize_nearest(MockImageBackend::render("prompt text", c.seed, 64), 6, 6));
}

TEST_CASE("subprocess failures map to typed errors") {
  const auto dir = testing::scratch_dir("gen_subprocess_errors");
  write_png(patterned(3, 3, 1), dir / "bad.png");
  const GenerationConfig c = small_config();
  const std::string adapter = OOCD_MOCK_ADAPTER;

  SubprocessCaptionBackend refusing("a", {"/usr/bin/env", "OOCD_MOCK_FAIL_ON=bad", adapter});
  CHECK_THROWS_AS(generate_caption(dir / "bad.png", refusing, c), GenerationFailed);

  SubprocessCaptionBackend dying("a", {"/usr/bin/env", "OOCD_MOCK_EXIT_AFTER=0", adapter});
  CHECK_THROWS_AS(generate_caption(dir / "bad.png", dying, c), BackendUnavailable);

  SubprocessCaptionBackend garbage("a", {"/usr/bin/env", "OOCD_MOCK_GARBAGE=1", adapter});
  CHECK_THROWS(generate_caption(dir / "bad.png", garbage, c));

  SubprocessCaptionBackend missing("a", {(dir / "no-such-adapter").string()});
  CHECK_THROWS_AS(generate_caption(dir / "bad.png", missing, c), BackendUnavailable);
}
#endif
