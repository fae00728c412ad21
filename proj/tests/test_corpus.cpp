// Copyright 2026 The oocd Authors.
// SPDX-License-Identifier: Apache-2.0

#include <fstream>
#include <set>

#include "doctest.h"
#include "oocd/binary_io.hpp"
#include "oocd/corpus.hpp"
#include "oocd/error.hpp"
#include "oocd/image.hpp"
#include "test_support.hpp"

using namespace oocd;
namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

void touch_image(const fs::path& p) {
  fs::create_directories(p.parent_path());
  write_png(Image(2, 2), p);
}

std::string row(const std::string& id, const std::string& image, bool falsified,
                const std::string& split, const std::string& caption = "a caption") {
  return R"({"id":")" + id + R"(","image_path":")" + image + R"(","caption":")" + caption +
         R"(","falsified":)" + (falsified ? "true" : "false") + R"(,"split":")" + split +
         "\"}\n";
}

std::vector<Sample> synthetic(std::size_t pristine, std::size_t falsified, Split split) {
  std::vector<Sample> out;
  for (std::size_t i = 0; i < pristine + falsified; ++i) {
    Sample s;
    s.id = "x" + std::to_string(i);
    s.caption = "c";
    s.label = i < pristine ? Label::kPristine : Label::kFalsified;
    s.split = split;
    out.push_back(s);
  }
  return out;
}

}  // namespace

TEST_CASE("empty annotation file gives no samples and no issues") {
  const auto dir = testing::scratch_dir("corpus_empty");
  write_text(dir / "a.jsonl", "");
  const auto r = load_annotations(dir / "a.jsonl", dir);
  CHECK(r.samples.empty());
  CHECK(r.issues.empty());
}

TEST_CASE("row missing its caption is reported at its line") {
  const auto dir = testing::scratch_dir("corpus_missing_caption");
  for (int i = 0; i < 4; ++i) touch_image(dir / ("img" + std::to_string(i) + ".png"));
  std::string text = row("a", "img0.png", false, "train") + row("b", "img1.png", true, "val") +
                     R"({"id":"c","image_path":"img2.png","falsified":false,"split":"test"})" +
                     "\n" + row("d", "img3.png", true, "test");
  write_text(dir / "a.jsonl", text);

  const auto r = load_annotations(dir / "a.jsonl", dir);
  REQUIRE(r.samples.size() == 3);
  REQUIRE(r.issues.size() == 1);
  CHECK(r.issues[0].line == 3);
  CHECK(r.issues[0].code == "ParseError");
  CHECK(r.summary().rfind("LINE 3: ParseError: ", 0) == 0);
  CHECK(r.samples[1].split == Split::kVal);
  CHECK(r.samples[1].label == Label::kFalsified);

  LoadOptions strict;
  strict.strict = true;
  try {
    load_annotations(dir / "a.jsonl", dir, strict);
    FAIL("strict load should throw");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
}

TEST_CASE("missing images are reported in lenient mode and fatal in strict mode") {
  const auto dir = testing::scratch_dir("corpus_missing_image");
  touch_image(dir / "here.png");
  write_text(dir / "a.jsonl",
             row("a", "here.png", false, "train") + row("b", "gone.png", true, "train"));
  const auto r = load_annotations(dir / "a.jsonl", dir);
  CHECK(r.samples.size() == 1);
  REQUIRE(r.issues.size() == 1);
  CHECK(r.issues[0].code == "MissingImage");
  CHECK(r.issues[0].line == 2);

  LoadOptions strict;
  strict.strict = true;
  CHECK_THROWS_AS(load_annotations(dir / "a.jsonl", dir, strict), MissingImage);
}

TEST_CASE("blank captions, bad splits and duplicate ids are rejected") {
  const auto dir = testing::scratch_dir("corpus_rejects");
  touch_image(dir / "i.png");
  write_text(dir / "a.jsonl", row("a", "i.png", false, "train", "   ") +
                                  row("b", "i.png", false, "holdout") +
                                  row("c", "i.png", false, "train") +
                                  row("c", "i.png", true, "train") + "not json\n");
  const auto r = load_annotations(dir / "a.jsonl", dir);
  CHECK(r.samples.size() == 1);
  CHECK(r.issues.size() == 4);
  for (const auto& i : r.issues) CHECK(i.code == "ParseError");
}

TEST_CASE("unknown keys survive a write and reload") {
  const auto dir = testing::scratch_dir("corpus_roundtrip");
  touch_image(dir / "i.png");
  write_text(dir / "a.jsonl",
             R"({"id":"a","image_path":"i.png","caption":"héllo wörld","falsified":true,)"
             R"("split":"val","source":"wire","score":0.25})" "\n");
  const auto first = load_annotations(dir / "a.jsonl", dir);
  REQUIRE(first.samples.size() == 1);
  write_annotations(first.samples, dir / "b.jsonl");
  const auto second = load_annotations(dir / "b.jsonl", dir);
  REQUIRE(second.samples.size() == 1);
  CHECK(second.samples[0] == first.samples[0]);
  CHECK(second.samples[0].extra_json.find("wire") != std::string::npos);
}

TEST_CASE("summarize counts splits and falsified fractions") {
  auto samples = synthetic(2, 2, Split::kTrain);
  auto m = summarize(samples);
  CHECK(m.counts[0] == 4);
  CHECK(m.class_balance[0] == doctest::Approx(0.5));

  samples = synthetic(7, 3, Split::kTest);
  m = summarize(samples);
  CHECK(m.counts[2] == 10);
  CHECK(m.class_balance[2] == doctest::Approx(0.3));
  CHECK(m.total() == 10);

  m = summarize({});
  CHECK(m.total() == 0);
  CHECK(m.class_balance[0] == 0.0);
}

TEST_CASE("subsample is stratified and repeatable") {
  const auto samples = synthetic(500, 500, Split::kTrain);
  const auto a = subsample(samples, 100, 7);
  const auto b = subsample(samples, 100, 7);
  REQUIRE(a.size() == 100);
  CHECK(a == b);
  const auto m = summarize(a);
  CHECK(m.class_balance[0] * 100 >= 49.0);
  CHECK(m.class_balance[0] * 100 <= 51.0);

  CHECK(subsample(samples, 0, 1).empty());
  const auto all = subsample(samples, samples.size(), 3);
  std::set<std::string> ids;
  for (const auto& s : all) ids.insert(s.id);
  CHECK(ids.size() == samples.size());
  CHECK_THROWS_AS(subsample(samples, samples.size() + 1, 3), InsufficientSamples);
}

TEST_CASE("subsample preserves skewed balance within one sample per class") {
  const auto samples = synthetic(70, 30, Split::kTrain);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = subsample(samples, 33, seed);
    std::size_t f = 0;
    for (const auto& x : s) f += x.label == Label::kFalsified;
    CHECK(f >= 9);
    CHECK(f <= 11);
  }
}

TEST_CASE("subsample leaves its input untouched") {
  const auto samples = synthetic(10, 10, Split::kVal);
  const auto copy = samples;
  (void)subsample(samples, 5, 1);
  (void)filter_split(samples, Split::kVal);
  CHECK(samples == copy);
}

TEST_CASE("NewsCLIPpings triple-file layout converts to samples") {
  const auto dir = testing::scratch_dir("corpus_convert");
  write_text(dir / "data.json",
             R"([{"id": 1, "caption": "cap one", "image_path": "./a.jpg"},)"
             R"( {"id": 2, "caption": "cap two", "image_path": "./b.jpg"}])");
  write_text(dir / "train.json",
             R"({"annotations": [{"id": 1, "image_id": 1, "falsified": false},)"
             R"( {"id": 1, "image_id": 2, "falsified": true}]})");
  write_text(dir / "val.json", R"({"annotations": [{"id": 2, "image_id": 2, "falsified": false}]})");
  write_text(dir / "test.json", R"({"annotations": []})");
  const auto samples = convert_newsclippings(
      {dir / "train.json", dir / "val.json", dir / "test.json"}, dir / "data.json", dir);
  REQUIRE(samples.size() == 3);
  CHECK(samples[1].caption == "cap one");
  CHECK(samples[1].relative_image_path == "./b.jpg");
  CHECK(samples[1].label == Label::kFalsified);
  CHECK(samples[2].split == Split::kVal);

  write_text(dir / "test.json", R"({"annotations": [{"id": 9, "image_id": 1}]})");
  CHECK_THROWS_AS(convert_newsclippings({dir / "train.json", dir / "val.json", dir / "test.json"},
                                        dir / "data.json", dir),
                  ParseError);
}
